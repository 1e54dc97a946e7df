#pragma once

#include <algorithm>
#include <vector>

#include "compile/dataset.hpp"
#include "compile/model.hpp"

namespace testing {

inline compile::grid::GridConfig small_grid() {
  compile::grid::GridConfig c;
  c.size = 6;
  c.num_types = 4;
  c.num_objects = 4;
  return c;
}

inline compile::GenerationOptions small_grid_options(int episodes, int tasks, std::uint64_t seed) {
  compile::GenerationOptions o;
  o.env = compile::EnvKind::Grid;
  o.episodes = episodes;
  o.num_tasks = tasks;
  o.kind = compile::TaskKind::Pickup;
  o.master_seed = seed;
  o.cap = 42;
  o.grid = small_grid();
  return o;
}

inline std::vector<compile::EpisodeTensors> prepare_all(const std::vector<compile::EpisodeRecord>& records) {
  std::vector<compile::EpisodeTensors> out;
  for (const auto& r : records) out.push_back(compile::prepare_episode(r));
  return out;
}

// Cuts an episode to its first `steps` steps, dropping boundaries beyond it.
inline compile::EpisodeTensors truncate(compile::EpisodeTensors e, int steps) {
  steps = std::min(steps, e.length());
  e.observations.conservativeResize(steps, Eigen::NoChange);
  e.actions.conservativeResize(steps, Eigen::NoChange);
  if (!e.action_ids.empty()) e.action_ids.resize(static_cast<std::size_t>(steps));
  std::erase_if(e.boundaries, [&](int b) { return b > steps + 1; });
  return e;
}

inline compile::Batch batch_of(const std::vector<compile::EpisodeTensors>& eps, int max_steps = 0) {
  std::vector<const compile::EpisodeTensors*> ptrs;
  for (const auto& e : eps) ptrs.push_back(&e);
  return compile::collate(ptrs, max_steps);
}

inline compile::CompILEConfig tiny_config(int segments, int latents, int width) {
  compile::CompILEConfig c;
  c.segments = segments;
  c.latents = latents;
  c.hidden = width;
  c.conv_channels = 2;
  return c;
}

inline compile::EnvSpec small_grid_env() {
  compile::EnvSpec e;
  e.kind = compile::EnvKind::Grid;
  e.grid_size = 6;
  return e;
}

}  // namespace testing
