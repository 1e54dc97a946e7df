#pragma once

#include <string>
#include <vector>

#include "compile/autodiff.hpp"
#include "compile/env_spec.hpp"
#include "compile/parameters.hpp"

namespace compile::nn {

struct Linear {
  Parameter* weight = nullptr;  // in x out
  Parameter* bias = nullptr;    // 1 x out, may be null

  ad::Var operator()(ad::Graph& g, const ad::Var& x) const;
  int in_features() const { return static_cast<int>(weight->value.rows()); }
  int out_features() const { return static_cast<int>(weight->value.cols()); }
};

Linear make_linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng,
                   bool with_bias = true);

// ReLU between layers, no activation after the last one.
struct Mlp {
  std::vector<Linear> layers;
  ad::Var operator()(ad::Graph& g, const ad::Var& x) const;
};

Mlp make_mlp(ParameterStore& store, const std::string& name, const std::vector<int>& widths, Rng& rng);

struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;
  ad::Var operator()(ad::Graph& g, const ad::Var& x) const;
};

LayerNorm make_layer_norm(ParameterStore& store, const std::string& name, int width);

struct Conv3x3 {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
  int height = 0;
  int width = 0;
  int in_channels = 0;
  int out_channels = 0;
  ad::Var operator()(ad::Graph& g, const ad::Var& x) const;
};

Conv3x3 make_conv(ParameterStore& store, const std::string& name, int height, int width, int in_channels,
                  int out_channels, Rng& rng);

// Gate layout i, f, g, o.
struct LstmCell {
  Parameter* input_weight = nullptr;   // in x 4H
  Parameter* hidden_weight = nullptr;  // H x 4H
  Parameter* bias = nullptr;           // 1 x 4H
  int hidden = 0;

  // x W + b for every row at once.
  ad::Var project_input(ad::Graph& g, const ad::Var& x) const;
  struct State {
    ad::Var h;
    ad::Var c;
  };
  State step(ad::Graph& g, const ad::Var& projected, const State& prev) const;
};

LstmCell make_lstm(ParameterStore& store, const std::string& name, int in, int hidden, Rng& rng);

// Runs the cell over step-major rows (row = t * batch + b). After each update
// the hidden and cell state are multiplied by mask(:, t) when a mask (batch x
// steps) is given. Returns the per-step hidden outputs before masking,
// stacked step-major ((steps * batch) x H).
ad::Var run_masked_lstm(ad::Graph& g, const LstmCell& cell, const ad::Var& projected, int batch, int steps,
                        const ad::Var* mask);

// Maps (observation, optional action features) rows to layer-normalised
// embeddings of width `width`. Grid observations go through a two-layer 3x3
// CNN, vector observations through a two-layer MLP; either is followed by a
// linear projection. Action features, when present, are linearly embedded and
// concatenated ahead of the normalisation.
class StepEmbedder {
 public:
  StepEmbedder() = default;
  StepEmbedder(ParameterStore& store, const std::string& name, const EnvSpec& env, int width, int conv_channels,
               int action_features, Rng& rng);

  ad::Var operator()(ad::Graph& g, const ad::Var& observations, const ad::Var* actions) const;
  int width() const { return width_; }
  int action_features() const { return action_features_; }

 private:
  EnvSpec env_;
  int width_ = 0;
  int action_features_ = 0;
  Conv3x3 conv1_, conv2_;
  Mlp vector_net_;
  Linear state_projection_;
  Linear action_projection_;
  LayerNorm norm_;
};

}  // namespace compile::nn
