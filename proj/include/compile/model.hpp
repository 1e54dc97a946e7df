#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <string_view>
#include <vector>

#include "compile/autodiff.hpp"
#include "compile/dataset.hpp"
#include "compile/env_spec.hpp"
#include "compile/layers.hpp"
#include "compile/parameters.hpp"
#include "compile/segmentation.hpp"
#include "json.hpp"

namespace compile {

enum class LatentKind { Categorical, Gaussian };
enum class Readout { LastStep, Attentive };
enum class Supervision { None, Z, B };

std::string_view to_string(LatentKind v);
std::string_view to_string(Readout v);
std::string_view to_string(Supervision v);
LatentKind parse_latent_kind(std::string_view s);
Readout parse_readout(std::string_view s);
Supervision parse_supervision(std::string_view s);

struct CompILEConfig {
  int segments = 3;    // M
  int latents = 10;    // K (categorical)
  int latent_dim = 32; // Gaussian
  LatentKind latent_kind = LatentKind::Categorical;
  double temperature = 1.0;
  double poisson_rate = 3.0;
  double beta = 0.1;
  int hidden = 256;
  int conv_channels = 64;
  Readout readout = Readout::LastStep;
  Supervision supervision = Supervision::None;
  double termination_weight = 1.0;

  void validate() const;  // throws std::invalid_argument
  int code_size() const { return latent_kind == LatentKind::Categorical ? latents : latent_dim; }
  nlohmann::json to_json() const;
  static CompILEConfig from_json(const nlohmann::json& j);
};

nlohmann::json env_to_json(const EnvSpec& env);
EnvSpec env_from_json(const nlohmann::json& j);

struct ForwardOptions {
  SampleMode mode = SampleMode::Relaxed;
  std::uint64_t noise_seed = 0;
  double temperature = 1.0;
  int segments = 0;  // 0: use the configured M
  // Teacher forcing: 1-based boundaries / code indices per episode.
  const std::vector<std::vector<int>>* forced_boundaries = nullptr;
  const std::vector<std::vector<int>>* forced_codes = nullptr;
  // Restrict each boundary choice so that the remaining boundaries still fit
  // strictly increasing in {2..T+1}.
  bool monotone = false;
  bool with_policy = true;
  bool with_termination = true;
};

struct SegmentPass {
  ad::Var boundary_log_q;       // batch x steps; passes 1..M-1 only
  ad::Var boundary_sample;      // batch x steps
  std::vector<int> boundary_choice;  // drawn (or forced) position per episode
  ad::Var z_params;             // categorical: batch x K logits; Gaussian: batch x 2d (mean | log-variance)
  ad::Var z_log_q;              // categorical only
  ad::Var z_sample;             // batch x code_size
  ad::Var z_log_sample;         // categorical only
  std::vector<int> z_choice;    // categorical: drawn (or forced) code per episode
  ad::Var step_log_likelihood;  // (steps * batch) x 1, log p(a_t | s_t, z_i)
  ad::Var termination_logits;   // (steps * batch) x 1
  Matrix termination_target;    // (steps * batch) x 1
  Matrix termination_weight;    // (steps * batch) x 1, hard segment indicator
};

struct ForwardOutput {
  int segments = 0;
  int batch = 0;
  int steps = 0;
  std::vector<SegmentPass> passes;
  SoftSegmentation soft;
  // Hard segmentation: forced, or sequential restricted argmax of the boundary
  // posteriors (1-based b per episode).
  std::vector<std::vector<int>> boundaries;
};

// Step-major helpers (row = t * batch + b).
ad::Var to_batch_major(const ad::Var& column, int batch, int steps);  // (T*B) x 1 -> B x T
ad::Var to_step_major(const ad::Var& rows, int batch, int steps);     // B x T -> (T*B) x 1
ad::Var sum_over_time(const ad::Var& v, int batch, int steps);        // (T*B) x C -> B x C
ad::Var broadcast_to_steps(const ad::Var& v, int batch, int steps);   // B x C -> (T*B) x C

// Position in [lo, hi] with the largest scores(row, .), smallest index on
// ties. An empty range yields hi.
int restricted_argmax(const Matrix& scores, int row, int lo, int hi);

// Range that keeps boundaries strictly increasing: pass i (0-based) of M - 1
// boundary passes on a length-L episode after previous position prev.
inline std::pair<int, int> boundary_range(int prev, int pass, int boundary_passes, int length) {
  return {prev + 1, length - 1 - (boundary_passes - 1 - pass)};
}

class CompILEModel {
 public:
  CompILEModel(const CompILEConfig& config, const EnvSpec& env, std::uint64_t init_seed);
  CompILEModel(const CompILEModel&) = delete;
  CompILEModel& operator=(const CompILEModel&) = delete;

  const CompILEConfig& config() const { return config_; }
  const EnvSpec& env() const { return env_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  // (rows x obs, rows x action features) -> rows x hidden.
  ad::Var embed_step(ad::Graph& g, const ad::Var& observations, const ad::Var& actions) const;
  struct RecognitionHeads {
    ad::Var boundary_logits;  // batch x steps
    ad::Var z_params;         // (steps * batch) x (K or 2d)
    ad::Var attention;        // batch x steps (attentive readout only)
  };
  // One masked LSTM pass over pre-projected embeddings; mask may be null (all ones).
  RecognitionHeads recognition_pass(ad::Graph& g, const ad::Var& projected, int batch, int steps,
                                    const ad::Var* mask) const;
  ad::Var project_recognition_input(ad::Graph& g, const ad::Var& embeddings) const;

  // Readout of z parameters for one segment; weights (batch x steps) are the
  // boundary sample (last-step) or the segment probabilities (attentive).
  ad::Var readout(ad::Graph& g, const RecognitionHeads& heads, const ad::Var& weights, const Matrix& valid,
                  int batch, int steps) const;

  // Row-wise policy: observations (N x obs), codes (N x code_size).
  // Discrete envs: N x A log-probabilities of the mixture sum_k z_k pi_k.
  ad::Var action_log_probs(ad::Graph& g, const ad::Var& observations, const ad::Var& codes) const;
  // Continuous envs: N x A mixture means.
  ad::Var action_means(ad::Graph& g, const ad::Var& observations, const ad::Var& codes) const;

  // Termination logits for every step under a (hard) mask: (T*B) x 1.
  ad::Var termination_logits(ad::Graph& g, const ad::Var& projected, int batch, int steps,
                             const ad::Var* mask) const;
  ad::Var project_termination_input(ad::Graph& g, const ad::Var& observations, const ad::Var& actions) const;

  ForwardOutput forward(ad::Graph& g, const Batch& batch, const ForwardOptions& options) const;

  // Incremental termination network for online execution.
  struct TerminationState {
    Matrix h;
    Matrix c;
  };
  TerminationState termination_reset() const;
  double termination_step(const Matrix& observation, const Matrix& action, TerminationState& state) const;

 private:
  ad::Var policy_hidden(ad::Graph& g, const ad::Var& features, const ad::Var* codes) const;
  ad::Var policy_outputs(ad::Graph& g, const ad::Var& observations, const ad::Var& codes) const;
  ad::Var log_std(ad::Graph& g) const;
  // Per-step log-likelihood under each head: (rows) x heads.
  ad::Var head_log_likelihoods(ad::Graph& g, const ad::Var& hidden, const Batch& batch) const;
  int num_heads() const { return config_.latent_kind == LatentKind::Categorical ? config_.latents : 1; }

  CompILEConfig config_;
  EnvSpec env_;
  ParameterStore params_;

  nn::StepEmbedder rec_embed_;
  nn::LstmCell rec_lstm_;
  nn::Mlp boundary_head_;
  nn::Linear z_head_;
  nn::Linear attention_head_;

  nn::StepEmbedder policy_embed_;
  nn::Linear latent_projection_;  // Gaussian latent only
  nn::Linear policy_hidden_;
  nn::Linear policy_heads_;
  Parameter* log_std_ = nullptr;  // continuous actions

  nn::StepEmbedder term_embed_;
  nn::LstmCell term_lstm_;
  nn::Mlp term_head_;
};

}  // namespace compile
