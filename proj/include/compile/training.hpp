#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "compile/model.hpp"

namespace compile {

// p(d) proportional to rate^d / d! over d = 1..support.
std::vector<double> truncated_poisson(double rate, int support);

struct LossValues {
  double total = 0;
  double recon = 0;     // -sum_i L_i / sum of lengths
  double kl_z = 0;      // per step, before beta
  double kl_b = 0;      // per step, before beta
  double term_bce = 0;  // per step
  double sup = 0;
};

struct LossReport {
  ad::Var total;
  ad::Var kl_z;  // summed over the batch
  ad::Var kl_b;  // summed over the batch
  std::vector<double> segment_recon;  // L_i summed over the batch
  LossValues values;
};

// KL_z summed over passes and batch; KL_b = M * KL(q(b_1) || truncated Poisson).
ad::Var kl_z_term(ad::Graph& g, const CompILEModel& model, const ForwardOutput& out);
ad::Var kl_b_term(ad::Graph& g, const CompILEModel& model, const ForwardOutput& out, const Batch& batch);

struct LossOptions {
  std::uint64_t noise_seed = 0;
  double temperature = 1.0;
};

LossReport elbo_loss(ad::Graph& g, const CompILEModel& model, const Batch& batch, const LossOptions& options);

// Single-sample ELBO of one episode with exact discrete samples of b and z
// (M = 2, categorical latents, uniform code prior, beta = 1).
double discrete_elbo_sample(const CompILEModel& model, const Batch& episode, std::uint64_t noise_seed);
// log p(a | s) by enumerating every b_1 in {2..T+1} and every code pair.
double exact_log_likelihood(const CompILEModel& model, const Batch& episode);

struct TrainOptions {
  int iterations = 1000;
  int batch_size = 256;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  double final_temperature = 0;  // > 0: anneal linearly from the config temperature
  int checkpoint_every = 0;
  std::filesystem::path checkpoint_path;
  std::string checkpoint_header;  // JSON; "iteration" is added
  std::filesystem::path loss_csv;
  std::function<void(int, const LossValues&)> on_iteration;
};

// Generic Adam loop over random mini-batches (sampled with replacement).
// Throws std::runtime_error when the loss becomes non-finite.
using LossFn = std::function<LossReport(ad::Graph&, const Batch&, int iteration)>;
std::vector<LossValues> train_loop(ParameterStore& params, const std::vector<EpisodeTensors>& data,
                                   const TrainOptions& options, const LossFn& loss);

std::vector<LossValues> train(CompILEModel& model, const std::vector<EpisodeTensors>& data, const TrainOptions& options);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossValues>& curve);

std::string model_header(const std::string& kind, const CompILEConfig& config, const EnvSpec& env);

}  // namespace compile
