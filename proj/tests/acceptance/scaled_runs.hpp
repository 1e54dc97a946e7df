#pragma once

// Scaled training runs on the 6x6 grid variant (4 object types, pick-up
// tasks). The supervised model is trained once and shared by the supervised
// and generalization criteria.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "compile/baselines.hpp"
#include "compile/evaluation.hpp"
#include "compile/log.hpp"
#include "fixtures.hpp"

namespace testing {

struct ScaledResult {
  bool pass = false;
  std::string detail;
};

struct ScaledSetup {
  int train_episodes = 20000;
  int test_episodes = 256;
  int iterations = 5000;
  // Three seeds of both models have to fit the one-hour budget.
  int unsupervised_iterations = 3000;
  int surprisal_iterations = 3000;
  int batch_size = 32;
  double learning_rate = 1e-3;
  int hidden = 128;
  int conv_channels = 16;
  int latents = 4;
  std::uint64_t train_seed = 1000;
  std::uint64_t test_seed = 900000;
  std::uint64_t long_test_seed = 800000;
};

class ScaledRuns {
 public:
  explicit ScaledRuns(ScaledSetup setup = {}) : s_(setup) {}

  ScaledResult supervised() {
    const auto& m = supervised_model();
    const auto r = compile::compute_metrics(m, test_records(), 2);
    const bool pass = r.boundary_accuracy >= 0.95 && *r.reconstruction >= 0.90 && *r.exact_match >= 0.75;
    return {pass, "boundary acc " + pct(r.boundary_accuracy) + " (>= 95), reconstruction " + pct(*r.reconstruction) +
                      " (>= 90), exact match " + pct(*r.exact_match) + " (>= 75), online " +
                      num(*r.online) + "; " + std::to_string(r.episodes.size()) + " held-out episodes, " +
                      std::to_string(s_.iterations) + " iterations"};
  }

  ScaledResult generalization() {
    const auto& m = supervised_model();
    compile::MetricsOptions mo;
    mo.online = false;
    const auto r = compile::compute_metrics(m, long_test_records(), 3, mo);
    return {r.boundary_accuracy >= 0.80, "M=3 on " + std::to_string(r.episodes.size()) +
                                             " held-out 3-task episodes: boundary acc " + pct(r.boundary_accuracy) +
                                             " (>= 80), reconstruction " + pct(*r.reconstruction)};
  }

  ScaledResult unsupervised_vs_surprisal() {
    double compile_f1 = 0, surprisal_f1 = 0;
    std::string per_seed;
    for (std::uint64_t seed : {1, 2, 3}) {
      compile::CompILEConfig cfg = base_config();
      compile::CompILEModel model(cfg, small_grid_env(), seed);
      compile::train(model, train_data(), options(seed, s_.unsupervised_iterations));
      compile::MetricsOptions mo;
      mo.online = false;
      const double cf = compile::compute_metrics(model, test_records(), 2, mo).f1_tol1;

      compile::SurprisalModel sur({s_.hidden, s_.conv_channels}, small_grid_env(), seed);
      compile::surprisal_train(sur, train_data(), options(seed, s_.surprisal_iterations));
      const double sf = compile::compute_surprisal_metrics(sur, test_records(), 2).f1_tol1;

      compile_f1 += cf / 3;
      surprisal_f1 += sf / 3;
      per_seed += " seed " + std::to_string(seed) + ": " + pct(cf) + " vs " + pct(sf) + ";";
      compile::log_info("unsupervised seed " + std::to_string(seed) + " F1(1) " + pct(cf) + " surprisal " + pct(sf));
    }
    const double gap = 100 * (compile_f1 - surprisal_f1);
    return {gap >= 10, "F1(tol=1) CompILE " + pct(compile_f1) + " vs surprisal " + pct(surprisal_f1) + ", gap " +
                           num(gap) + " points (>= 10);" + per_seed + " " +
                           std::to_string(s_.unsupervised_iterations) + " iterations each"};
  }

 private:
  static std::string pct(double v) { return num(100 * v); }
  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
  }

  compile::CompILEConfig base_config() const {
    compile::CompILEConfig c = tiny_config(2, s_.latents, s_.hidden);
    c.conv_channels = s_.conv_channels;
    return c;
  }

  compile::TrainOptions options(std::uint64_t seed, int iterations) const {
    compile::TrainOptions o;
    o.iterations = iterations;
    o.batch_size = s_.batch_size;
    o.learning_rate = s_.learning_rate;
    o.seed = seed;
    return o;
  }

  const std::vector<compile::EpisodeTensors>& train_data() {
    if (train_.empty()) train_ = prepare_all(compile::generate_records(small_grid_options(s_.train_episodes, 2, s_.train_seed)));
    return train_;
  }
  const std::vector<compile::EpisodeRecord>& test_records() {
    if (test_.empty()) test_ = compile::generate_records(small_grid_options(s_.test_episodes, 2, s_.test_seed));
    return test_;
  }
  const std::vector<compile::EpisodeRecord>& long_test_records() {
    if (long_test_.empty())
      long_test_ = compile::generate_records(small_grid_options(s_.test_episodes, 3, s_.long_test_seed));
    return long_test_;
  }

  const compile::CompILEModel& supervised_model() {
    if (!supervised_) {
      compile::CompILEConfig cfg = base_config();
      cfg.supervision = compile::Supervision::B;
      supervised_ = std::make_unique<compile::CompILEModel>(cfg, small_grid_env(), 1);
      compile::train(*supervised_, train_data(), options(1, s_.iterations));
    }
    return *supervised_;
  }

  ScaledSetup s_;
  std::vector<compile::EpisodeTensors> train_;
  std::vector<compile::EpisodeRecord> test_;
  std::vector<compile::EpisodeRecord> long_test_;
  std::unique_ptr<compile::CompILEModel> supervised_;
};

}  // namespace testing
