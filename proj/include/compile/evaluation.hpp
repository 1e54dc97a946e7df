#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "compile/baselines.hpp"
#include "compile/inference.hpp"
#include "json.hpp"

namespace compile {

// Greedy one-to-one matching: predictions in ascending order each take the
// first unmatched truth within tol. Two empty sets score 1.
double f1_score(const std::vector<int>& predicted, const std::vector<int>& truth, int tol);

// Mean of [predicted_i == truth_i] over the true boundaries; missing
// predictions count as misses. No true boundaries: 1 iff none predicted.
double boundary_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

struct EpisodeMetrics {
  std::vector<int> predicted;
  std::vector<int> truth;
  double boundary_accuracy = 0;
  double f1_tol0 = 0;
  double f1_tol1 = 0;
  std::optional<double> reconstruction;
  std::optional<bool> exact_match;
  std::optional<int> online_reward;
};

struct MetricsReport {
  std::string model;
  int num_tasks = 0;  // 0 when the records mix task counts
  int segments = 0;
  double boundary_accuracy = 0;
  double f1_tol0 = 0;
  double f1_tol1 = 0;
  std::optional<double> reconstruction;
  std::optional<double> exact_match;
  std::optional<double> online;  // mean reward in [0, 100]
  std::vector<EpisodeMetrics> episodes;
};

struct MetricsOptions {
  bool online = true;
  int max_online_steps = 200;
};

// Aggregates per-episode metrics (means over episodes).
MetricsReport aggregate(std::string model, int segments, std::vector<EpisodeMetrics> episodes);

MetricsReport compute_metrics(const CompILEModel& model, const std::vector<EpisodeRecord>& records, int segments,
                              const MetricsOptions& options = {});
MetricsReport compute_surprisal_metrics(const SurprisalModel& model, const std::vector<EpisodeRecord>& records,
                                        int segments);

// One row per (model, task count, metric).
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& reports);
nlohmann::json report_to_json(const MetricsReport& report);

}  // namespace compile
