#pragma once

#include <vector>

#include "compile/dataset.hpp"
#include "compile/model.hpp"
#include "json.hpp"

namespace compile {

struct Segmentation {
  std::vector<int> boundaries;   // 1-based, strictly increasing when T >= M - 1
  std::vector<int> codes;        // argmax code per segment (categorical latents)
  Matrix code_vectors;           // M x code_size: one-hot codes or Gaussian means
  std::vector<int> segment_ids;  // per step, 0-based
};

// Argmax boundaries restricted to follow the previous one, then argmax codes.
// segments <= 0 uses the configured M.
std::vector<Segmentation> segment_discrete(const CompILEModel& model, const Batch& batch, int segments = 0);
Segmentation segment_discrete(const CompILEModel& model, const EpisodeTensors& episode, int segments = 0);

// Continuous actions count as matched when every component is within this
// distance of the demonstration.
inline constexpr double kContinuousMatchTolerance = 0.1;

struct Reconstruction {
  std::vector<int> action_ids;  // discrete actions
  Matrix actions;               // T x A: one-hot (discrete) or mixture means (continuous)
};

// Teacher-forced argmax actions of the sub-policy of each step's segment.
Reconstruction reconstruct_actions(const CompILEModel& model, const EpisodeTensors& episode,
                                   const Segmentation& segmentation);
// Per-step match flags of a reconstruction against the demonstration.
std::vector<bool> matched_steps(const EpisodeTensors& episode, const Reconstruction& reconstruction);

struct OnlineOptions {
  int max_steps = 200;
  bool use_termination = true;  // false: run the first code to the end
};

struct OnlineResult {
  int reward = 0;  // 0 or 100
  int steps = 0;
  int switches = 0;
  int tasks_completed = 0;
};

// Executes the segmentation's codes in a fresh copy of the recorded instance,
// switching code whenever the termination probability exceeds 0.5 after a step.
OnlineResult execute_online(const CompILEModel& model, const EpisodeRecord& record, const Segmentation& segmentation,
                            const OnlineOptions& options = {});
// Infers the codes from the record's demonstration with M = number of tasks.
OnlineResult execute_online(const CompILEModel& model, const EpisodeRecord& record, const OnlineOptions& options = {});

nlohmann::json segmentation_report(const Segmentation& segmentation, const EpisodeTensors* episode = nullptr);

}  // namespace compile
