#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "compile/rng.hpp"
#include "compile/tasks.hpp"

namespace compile::grid {

inline constexpr int kNumObjectTypes = 10;
inline constexpr int kWallChannel = kNumObjectTypes;
inline constexpr int kPlayerChannel = kNumObjectTypes + 1;
inline constexpr int kNumChannels = kNumObjectTypes + 2;
inline constexpr int kNumActions = 8;

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

// Action ids: moves N, E, S, W followed by directional pickups N, E, S, W.
enum class Action : int {
  MoveN = 0, MoveE, MoveS, MoveW,
  PickN, PickE, PickS, PickW,
};

inline bool is_pickup(Action a) { return static_cast<int>(a) >= 4; }
inline int direction_of(Action a) { return static_cast<int>(a) % 4; }
inline Action move_action(int dir) { return static_cast<Action>(dir); }
inline Action pickup_action(int dir) { return static_cast<Action>(4 + dir); }
Cell neighbor(Cell c, int dir);

struct GridObject {
  int type = 0;
  Cell pos;
  friend bool operator==(const GridObject&, const GridObject&) = default;
};

// Generation parameters. The defaults give the standard 10x10 world; smaller
// variants keep the 12-channel observation layout.
struct GridConfig {
  int size = 10;
  int num_types = kNumObjectTypes;
  int num_objects = 6;
  double wall_keep_rate = 0.2;
  int max_retries = 100;
};

class GridLayout {
 public:
  GridLayout() = default;
  explicit GridLayout(int size);

  int size() const { return size_; }
  bool in_bounds(Cell c) const;
  bool is_wall(Cell c) const;
  void set_wall(Cell c, bool wall);
  std::vector<Cell> walls() const;  // row-major order

  std::vector<GridObject> objects;
  Cell agent_start;

  friend bool operator==(const GridLayout&, const GridLayout&) = default;

 private:
  int size_ = 0;
  std::vector<std::uint8_t> wall_mask_;
};

struct GridEnvState {
  GridLayout layout;
  Cell agent;
  std::vector<bool> removed;  // per object index
  std::vector<TaskSpec> tasks;
  int task_index = 0;
  int step_count = 0;

  bool done() const { return task_index >= static_cast<int>(tasks.size()); }
  // Index of a present object at `c`, or -1.
  int object_at(Cell c) const;
};

struct GridEvent {
  enum class Kind { None, Visited, Picked, Blocked };
  Kind kind = Kind::None;
  int object_type = -1;
  friend bool operator==(const GridEvent&, const GridEvent&) = default;
};

struct GridStep {
  GridEnvState state;
  GridEvent event;
};

// Perfect maze by recursive backtracking. Cells sit on odd coordinates; every
// other cell (including the border) starts as wall and is carved as needed.
std::vector<std::uint8_t> generate_maze(int size, Rng& rng);

// Keeps each interior wall with probability keep_rate; the border is kept.
GridLayout subsample_walls(const std::vector<std::uint8_t>& maze, int size, double keep_rate,
                           Rng& rng);

GridEnvState make_state(GridLayout layout, std::vector<TaskSpec> tasks);

// Throws std::invalid_argument on bad arguments, std::runtime_error when no
// solvable layout was found within the retry budget.
GridEnvState generate_instance(std::uint64_t seed, int num_tasks, TaskKind kind,
                               const GridConfig& config = {});
GridEnvState generate_instance(Rng& rng, int num_tasks, TaskKind kind, const GridConfig& config);

// True iff every object is reachable from the agent start.
bool all_objects_reachable(const GridLayout& layout);

GridStep step(const GridEnvState& state, Action action);
// In-place variant of step.
GridEvent apply(GridEnvState& state, Action action);

// HWC tensor of shape size x size x kNumChannels.
std::vector<double> observe(const GridEnvState& state);

// Shortest-path distances from `from` over non-wall cells (-1 if unreachable).
std::vector<int> distance_map(const GridLayout& layout, Cell from);

// Next demonstrator action for the current task: first step of a BFS path to
// the nearest matching object (expansion order N, E, S, W), with the final
// move of a pickup leg replaced by the directional pickup. Empty when the
// current leg cannot be solved by a path of length >= 1.
std::optional<Action> demo_action(const GridEnvState& state);

struct GridDemo {
  std::vector<Action> actions;
  std::vector<int> boundaries;  // 1-based index of the first action of each later segment
};

// Rolls the demonstrator until all tasks are done. Empty (resample) when a leg
// is unsolvable/empty or the length would exceed `cap`.
std::optional<GridDemo> generate_demo(const GridEnvState& state, int cap = 200);

struct GridEpisode {
  GridEnvState initial;
  GridDemo demo;
};

// Instance + demo, resampling from the same seeded stream until a demo fits.
GridEpisode generate_episode(std::uint64_t seed, int num_tasks, TaskKind kind, int cap,
                             const GridConfig& config = {});

}  // namespace compile::grid
