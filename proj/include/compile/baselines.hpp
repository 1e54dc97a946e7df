#pragma once

#include <vector>

#include "compile/inference.hpp"
#include "compile/training.hpp"

namespace compile {

struct SurprisalConfig {
  int hidden = 256;
  int conv_channels = 64;

  void validate() const;
  nlohmann::json to_json() const;
  static SurprisalConfig from_json(const nlohmann::json& j);
};

// Autoregressive action model p(a_t | a_{1:t-1}, s_{1:t}): an LSTM over
// embed(s_t, a_{t-1}) with the CompILE encoder widths.
class SurprisalModel {
 public:
  SurprisalModel(const SurprisalConfig& config, const EnvSpec& env, std::uint64_t init_seed);
  SurprisalModel(const SurprisalModel&) = delete;
  SurprisalModel& operator=(const SurprisalModel&) = delete;

  const SurprisalConfig& config() const { return config_; }
  const EnvSpec& env() const { return env_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  // (steps * batch) x 1 log-likelihoods; zero on padding.
  ad::Var step_log_likelihood(ad::Graph& g, const Batch& batch) const;
  LossReport loss(ad::Graph& g, const Batch& batch) const;

 private:
  SurprisalConfig config_;
  EnvSpec env_;
  ParameterStore params_;
  nn::StepEmbedder embed_;
  nn::LstmCell lstm_;
  nn::Linear hidden_;
  nn::Linear head_;
  Parameter* log_std_ = nullptr;
};

std::string surprisal_header(const SurprisalConfig& config, const EnvSpec& env);

std::vector<LossValues> surprisal_train(SurprisalModel& model, const std::vector<EpisodeTensors>& data,
                                        const TrainOptions& options);

// Per-step log-likelihoods of one episode (log-densities for continuous actions).
std::vector<double> surprisal_log_likelihoods(const SurprisalModel& model, const EpisodeTensors& episode);

// The segments - 1 steps t >= 2 (1-based) with the smallest likelihood, ties
// toward smaller t, sorted ascending. Any monotone transform of the
// likelihoods gives the same result.
std::vector<int> surprisal_boundaries(const std::vector<double>& likelihoods, int segments);
std::vector<int> surprisal_segment(const SurprisalModel& model, const EpisodeTensors& episode, int segments);

// Single-segment behavioural cloning with a Gaussian latent.
CompILEConfig vae_bc_config(CompILEConfig base, int latent_dim = 32);
std::vector<LossValues> vae_bc_train(CompILEModel& model, const std::vector<EpisodeTensors>& data,
                                     const TrainOptions& options);
// Runs the single decoded policy to the end of the episode.
OnlineResult vae_bc_execute(const CompILEModel& model, const EpisodeRecord& record, int max_steps = 200);

}  // namespace compile
