#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "compile/env_spec.hpp"
#include "compile/grid_env.hpp"
#include "compile/reacher_env.hpp"
#include "compile/tasks.hpp"
#include "compile/tensor.hpp"

namespace compile {

// One demonstration. Only the fields of `env` are meaningful.
struct EpisodeRecord {
  EnvKind env = EnvKind::Grid;
  std::uint64_t seed = 0;
  std::vector<TaskSpec> tasks;
  std::vector<int> boundaries;

  grid::GridLayout layout;
  std::vector<int> grid_actions;
  grid::Cell digest_agent;
  std::vector<int> digest_removed;  // sorted types of picked-up objects

  std::vector<reacher::Target> targets;
  std::array<double, 2> theta_start{};
  std::vector<reacher::Action> reacher_actions;
  std::array<double, 2> digest_theta{};

  int length() const;
  EnvSpec spec() const;
  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

// Parse or invariant failure. line is 1-based (0 when not file-backed).
class DatasetError : public std::runtime_error {
 public:
  DatasetError(int line, std::string field, const std::string& message);
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

struct GenerationOptions {
  EnvKind env = EnvKind::Grid;
  int episodes = 1;
  int num_tasks = 3;
  TaskKind kind = TaskKind::Pickup;
  std::uint64_t master_seed = 0;
  int cap = 200;
  grid::GridConfig grid;
};

// Episode i uses seed master_seed + i.
EpisodeRecord generate_record(const GenerationOptions& options, std::uint64_t seed);
std::vector<EpisodeRecord> generate_records(const GenerationOptions& options);

std::string to_json_line(const EpisodeRecord& record);
EpisodeRecord parse_json_line(const std::string& line, int line_number = 0);

void write_dataset(const std::vector<EpisodeRecord>& records, const std::filesystem::path& path);
void write_dataset(const GenerationOptions& options, const std::filesystem::path& path);
std::vector<EpisodeRecord> load_dataset(const std::filesystem::path& path);

struct ReplayResult {
  bool ok = true;
  int step = 0;  // 1-based step of the first divergence, 0 if none
  std::string message;
};

// Replays the actions, checking each against the demonstrator, the boundaries
// against task-completion events, and the final digest.
ReplayResult replay_validate(const EpisodeRecord& record);

grid::GridEnvState initial_grid_state(const EpisodeRecord& record);
reacher::ReacherState initial_reacher_state(const EpisodeRecord& record);

// Per-episode tensors: observation before each action (T x obs), action
// features (T x action_size; one-hot for grid), and integer action ids.
struct EpisodeTensors {
  EnvSpec env;
  Matrix observations;
  Matrix actions;
  std::vector<int> action_ids;  // grid only
  std::vector<int> boundaries;
  std::vector<int> task_types;
  int length() const { return static_cast<int>(observations.rows()); }
};

EpisodeTensors prepare_episode(const EpisodeRecord& record);

// Step-major padded batch: row t * batch + b holds episode b at step t.
struct Batch {
  EnvSpec env;
  int batch = 0;
  int steps = 0;
  Matrix observations;
  Matrix actions;
  std::vector<int> action_ids;   // -1 on padding (grid); empty for reacher
  Matrix valid;                  // batch x steps, 1 on real steps, 0 on padding
  std::vector<int> lengths;
  std::vector<std::vector<int>> boundaries;
  std::vector<std::vector<int>> task_types;

  int padded_steps(int b) const { return steps - lengths[static_cast<std::size_t>(b)]; }
};

// max_steps <= 0 pads to the longest episode. Throws std::invalid_argument on
// mixed environments or an episode longer than max_steps.
Batch collate(const std::vector<const EpisodeTensors*>& episodes, int max_steps = 0);
Batch make_batch(const std::vector<EpisodeRecord>& records, int max_steps = 0);

}  // namespace compile
