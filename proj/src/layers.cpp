#include "compile/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "compile/grid_env.hpp"

namespace compile::nn {

using ad::Graph;
using ad::Var;

Var Linear::operator()(Graph& g, const Var& x) const {
  Var y = ad::matmul(x, g.param(*weight));
  return bias ? ad::add_row(y, g.param(*bias)) : y;
}

Linear make_linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng, bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = &store.add(name + ".weight", uniform_matrix(in, out, bound, rng));
  if (with_bias) l.bias = &store.add(name + ".bias", uniform_matrix(1, out, bound, rng));
  return l;
}

Var Mlp::operator()(Graph& g, const Var& x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](g, h);
    if (i + 1 < layers.size()) h = ad::relu(h);
  }
  return h;
}

Mlp make_mlp(ParameterStore& store, const std::string& name, const std::vector<int>& widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("make_mlp needs at least two widths");
  Mlp m;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    m.layers.push_back(make_linear(store, name + "." + std::to_string(i), widths[i], widths[i + 1], rng));
  return m;
}

Var LayerNorm::operator()(Graph& g, const Var& x) const {
  return ad::layer_norm_rows(x, g.param(*gain), g.param(*bias));
}

LayerNorm make_layer_norm(ParameterStore& store, const std::string& name, int width) {
  LayerNorm n;
  n.gain = &store.add(name + ".gain", Matrix::Ones(1, width));
  n.bias = &store.add(name + ".bias", Matrix::Zero(1, width));
  return n;
}

Var Conv3x3::operator()(Graph& g, const Var& x) const {
  return ad::conv3x3(x, g.param(*weight), g.param(*bias), height, width, in_channels);
}

Conv3x3 make_conv(ParameterStore& store, const std::string& name, int height, int width, int in_channels,
                  int out_channels, Rng& rng) {
  const double bound = 1.0 / std::sqrt(9.0 * in_channels);
  Conv3x3 c;
  c.weight = &store.add(name + ".weight", uniform_matrix(9 * in_channels, out_channels, bound, rng));
  c.bias = &store.add(name + ".bias", uniform_matrix(1, out_channels, bound, rng));
  c.height = height;
  c.width = width;
  c.in_channels = in_channels;
  c.out_channels = out_channels;
  return c;
}

Var LstmCell::project_input(Graph& g, const Var& x) const {
  return ad::add_row(ad::matmul(x, g.param(*input_weight)), g.param(*bias));
}

LstmCell::State LstmCell::step(Graph& g, const Var& projected, const State& prev) const {
  Var gates = ad::add(projected, ad::matmul(prev.h, g.param(*hidden_weight)));
  Var i = ad::sigmoid(ad::slice_cols(gates, 0, hidden));
  Var f = ad::sigmoid(ad::slice_cols(gates, hidden, hidden));
  Var cand = ad::tanh(ad::slice_cols(gates, 2 * hidden, hidden));
  Var o = ad::sigmoid(ad::slice_cols(gates, 3 * hidden, hidden));
  Var c = ad::add(ad::mul(f, prev.c), ad::mul(i, cand));
  Var h = ad::mul(o, ad::tanh(c));
  return {h, c};
}

LstmCell make_lstm(ParameterStore& store, const std::string& name, int in, int hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  LstmCell cell;
  cell.input_weight = &store.add(name + ".input_weight", uniform_matrix(in, 4 * hidden, bound, rng));
  cell.hidden_weight = &store.add(name + ".hidden_weight", uniform_matrix(hidden, 4 * hidden, bound, rng));
  cell.bias = &store.add(name + ".bias", uniform_matrix(1, 4 * hidden, bound, rng));
  cell.hidden = hidden;
  return cell;
}

Var run_masked_lstm(Graph& g, const LstmCell& cell, const Var& projected, int batch, int steps, const Var* mask) {
  LstmCell::State s{g.constant(Matrix::Zero(batch, cell.hidden)), g.constant(Matrix::Zero(batch, cell.hidden))};
  std::vector<Var> outputs;
  outputs.reserve(steps);
  for (int t = 0; t < steps; ++t) {
    s = cell.step(g, ad::slice_rows(projected, static_cast<Eigen::Index>(t) * batch, batch), s);
    outputs.push_back(s.h);
    if (mask) {
      Var m = ad::slice_cols(*mask, t, 1);
      s.h = ad::mul_col(s.h, m);
      s.c = ad::mul_col(s.c, m);
    }
  }
  return ad::concat_rows(outputs);
}

StepEmbedder::StepEmbedder(ParameterStore& store, const std::string& name, const EnvSpec& env, int width,
                           int conv_channels, int action_features, Rng& rng)
    : env_(env), width_(width), action_features_(action_features) {
  const int action_width = action_features > 0 ? width / 4 : 0;
  const int state_width = width - action_width;
  if (env.kind == EnvKind::Grid) {
    const int s = env.grid_size;
    conv1_ = make_conv(store, name + ".conv1", s, s, grid::kNumChannels, conv_channels, rng);
    conv2_ = make_conv(store, name + ".conv2", s, s, conv_channels, conv_channels, rng);
    state_projection_ = make_linear(store, name + ".state", s * s * conv_channels, state_width, rng);
  } else {
    vector_net_ = make_mlp(store, name + ".mlp", {env.observation_size(), width, width}, rng);
    state_projection_ = make_linear(store, name + ".state", width, state_width, rng);
  }
  if (action_width > 0) action_projection_ = make_linear(store, name + ".action", action_features, action_width, rng);
  norm_ = make_layer_norm(store, name + ".norm", width);
}

Var StepEmbedder::operator()(Graph& g, const Var& observations, const Var* actions) const {
  Var features;
  if (env_.kind == EnvKind::Grid) {
    features = ad::relu(conv2_(g, ad::relu(conv1_(g, observations))));
  } else {
    features = ad::relu(vector_net_(g, observations));
  }
  Var state = state_projection_(g, features);
  if (action_features_ > 0) {
    if (!actions) throw std::invalid_argument("StepEmbedder: action features required");
    state = ad::concat_cols({state, action_projection_(g, *actions)});
  }
  return norm_(g, state);
}

}  // namespace compile::nn
