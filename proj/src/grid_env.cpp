#include "compile/grid_env.hpp"

#include <algorithm>
#include <deque>
#include <stdexcept>
#include <string>

namespace compile::grid {
namespace {

constexpr int kRowDelta[4] = {-1, 0, 1, 0};
constexpr int kColDelta[4] = {0, 1, 0, -1};

template <typename T>
void partial_shuffle(std::vector<T>& items, std::size_t count, Rng& rng) {
  for (std::size_t i = 0; i < count && i + 1 < items.size(); ++i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(items.size()) - 1));
    std::swap(items[i], items[j]);
  }
}

bool is_target(const GridEnvState& s, Cell c, int type) {
  const int idx = s.object_at(c);
  return idx >= 0 && s.layout.objects[idx].type == type;
}

}  // namespace

Cell neighbor(Cell c, int dir) { return {c.row + kRowDelta[dir], c.col + kColDelta[dir]}; }

GridLayout::GridLayout(int size) : size_(size), wall_mask_(static_cast<std::size_t>(size * size), 0) {}

bool GridLayout::in_bounds(Cell c) const {
  return c.row >= 0 && c.col >= 0 && c.row < size_ && c.col < size_;
}

bool GridLayout::is_wall(Cell c) const {
  return !in_bounds(c) || wall_mask_[static_cast<std::size_t>(c.row * size_ + c.col)] != 0;
}

void GridLayout::set_wall(Cell c, bool wall) {
  if (!in_bounds(c)) throw std::out_of_range("wall cell outside grid");
  wall_mask_[static_cast<std::size_t>(c.row * size_ + c.col)] = wall ? 1 : 0;
}

std::vector<Cell> GridLayout::walls() const {
  std::vector<Cell> out;
  for (int r = 0; r < size_; ++r)
    for (int c = 0; c < size_; ++c)
      if (is_wall({r, c})) out.push_back({r, c});
  return out;
}

int GridEnvState::object_at(Cell c) const {
  for (std::size_t i = 0; i < layout.objects.size(); ++i)
    if (!removed[i] && layout.objects[i].pos == c) return static_cast<int>(i);
  return -1;
}

std::vector<std::uint8_t> generate_maze(int size, Rng& rng) {
  std::vector<std::uint8_t> maze(static_cast<std::size_t>(size * size), 1);
  std::vector<Cell> cells;
  for (int r = 1; r < size - 1; r += 2)
    for (int c = 1; c < size - 1; c += 2) cells.push_back({r, c});
  if (cells.empty()) return maze;

  auto at = [&](Cell c) -> std::uint8_t& { return maze[static_cast<std::size_t>(c.row * size + c.col)]; };
  auto is_cell = [&](Cell c) {
    return c.row >= 1 && c.col >= 1 && c.row < size - 1 && c.col < size - 1 && c.row % 2 == 1 &&
           c.col % 2 == 1;
  };

  const Cell start = cells[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cells.size()) - 1))];
  std::vector<Cell> stack{start};
  at(start) = 0;
  while (!stack.empty()) {
    const Cell cur = stack.back();
    std::vector<int> open;
    for (int d = 0; d < 4; ++d) {
      const Cell next{cur.row + 2 * kRowDelta[d], cur.col + 2 * kColDelta[d]};
      if (is_cell(next) && at(next) == 1) open.push_back(d);
    }
    if (open.empty()) {
      stack.pop_back();
      continue;
    }
    const int d = open[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(open.size()) - 1))];
    const Cell next{cur.row + 2 * kRowDelta[d], cur.col + 2 * kColDelta[d]};
    at(neighbor(cur, d)) = 0;
    at(next) = 0;
    stack.push_back(next);
  }
  return maze;
}

GridLayout subsample_walls(const std::vector<std::uint8_t>& maze, int size, double keep_rate,
                           Rng& rng) {
  GridLayout layout(size);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const bool border = r == 0 || c == 0 || r == size - 1 || c == size - 1;
      if (border) {
        layout.set_wall({r, c}, true);
      } else if (maze[static_cast<std::size_t>(r * size + c)] != 0) {
        layout.set_wall({r, c}, rng.bernoulli(keep_rate));
      }
    }
  }
  return layout;
}

GridEnvState make_state(GridLayout layout, std::vector<TaskSpec> tasks) {
  GridEnvState s;
  s.agent = layout.agent_start;
  s.removed.assign(layout.objects.size(), false);
  s.layout = std::move(layout);
  s.tasks = std::move(tasks);
  return s;
}

std::vector<int> distance_map(const GridLayout& layout, Cell from) {
  const int n = layout.size();
  std::vector<int> dist(static_cast<std::size_t>(n * n), -1);
  if (layout.is_wall(from)) return dist;
  std::deque<Cell> queue{from};
  dist[static_cast<std::size_t>(from.row * n + from.col)] = 0;
  while (!queue.empty()) {
    const Cell cur = queue.front();
    queue.pop_front();
    const int d0 = dist[static_cast<std::size_t>(cur.row * n + cur.col)];
    for (int d = 0; d < 4; ++d) {
      const Cell next = neighbor(cur, d);
      if (layout.is_wall(next)) continue;
      auto& slot = dist[static_cast<std::size_t>(next.row * n + next.col)];
      if (slot >= 0) continue;
      slot = d0 + 1;
      queue.push_back(next);
    }
  }
  return dist;
}

bool all_objects_reachable(const GridLayout& layout) {
  const auto dist = distance_map(layout, layout.agent_start);
  return std::all_of(layout.objects.begin(), layout.objects.end(), [&](const GridObject& o) {
    return dist[static_cast<std::size_t>(o.pos.row * layout.size() + o.pos.col)] >= 0;
  });
}

GridEnvState generate_instance(Rng& rng, int num_tasks, TaskKind kind, const GridConfig& config) {
  if (kind != TaskKind::Visit && kind != TaskKind::Pickup)
    throw std::invalid_argument("grid tasks must be visit or pickup");
  if (num_tasks < 1 || num_tasks > 5) throw std::invalid_argument("num_tasks must be in [1, 5]");
  if (num_tasks > config.num_objects)
    throw std::invalid_argument("num_tasks exceeds the number of objects");
  if (config.size < 4) throw std::invalid_argument("grid size must be at least 4");
  if (config.num_types < 1 || config.num_types > kNumObjectTypes)
    throw std::invalid_argument("num_types must be in [1, 10]");

  for (int attempt = 0; attempt < config.max_retries; ++attempt) {
    const auto maze = generate_maze(config.size, rng);
    GridLayout layout = subsample_walls(maze, config.size, config.wall_keep_rate, rng);

    std::vector<Cell> free_cells;
    for (int r = 1; r < config.size - 1; ++r)
      for (int c = 1; c < config.size - 1; ++c)
        if (!layout.is_wall({r, c})) free_cells.push_back({r, c});
    const auto needed = static_cast<std::size_t>(config.num_objects + 1);
    if (free_cells.size() < needed) continue;
    partial_shuffle(free_cells, needed, rng);

    for (int i = 0; i < config.num_objects; ++i) {
      const int type = static_cast<int>(rng.uniform_int(0, config.num_types - 1));
      layout.objects.push_back({type, free_cells[static_cast<std::size_t>(i)]});
    }
    layout.agent_start = free_cells[static_cast<std::size_t>(config.num_objects)];

    std::vector<int> order(static_cast<std::size_t>(config.num_objects));
    for (int i = 0; i < config.num_objects; ++i) order[static_cast<std::size_t>(i)] = i;
    partial_shuffle(order, static_cast<std::size_t>(num_tasks), rng);
    std::vector<TaskSpec> tasks;
    for (int i = 0; i < num_tasks; ++i)
      tasks.push_back({kind, layout.objects[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])].type});

    if (!all_objects_reachable(layout)) continue;
    return make_state(std::move(layout), std::move(tasks));
  }
  throw std::runtime_error("grid generation: no solvable layout after " +
                           std::to_string(config.max_retries) + " retries");
}

GridEnvState generate_instance(std::uint64_t seed, int num_tasks, TaskKind kind, const GridConfig& config) {
  Rng rng(seed);
  return generate_instance(rng, num_tasks, kind, config);
}

GridEvent apply(GridEnvState& s, Action action) {
  GridEvent event;
  const int dir = direction_of(action);
  const Cell target = neighbor(s.agent, dir);
  const bool has_task = !s.done();
  const TaskSpec task = has_task ? s.tasks[static_cast<std::size_t>(s.task_index)] : TaskSpec{};

  if (!is_pickup(action)) {
    if (s.layout.is_wall(target)) {
      event.kind = GridEvent::Kind::Blocked;
    } else {
      s.agent = target;
      if (has_task && task.kind == TaskKind::Visit && is_target(s, target, task.object_type)) {
        event = {GridEvent::Kind::Visited, task.object_type};
        ++s.task_index;
      }
    }
  } else {
    const int idx = s.object_at(target);
    if (idx >= 0) {
      const int type = s.layout.objects[static_cast<std::size_t>(idx)].type;
      s.removed[static_cast<std::size_t>(idx)] = true;
      event = {GridEvent::Kind::Picked, type};
      if (has_task && task.kind == TaskKind::Pickup && task.object_type == type) ++s.task_index;
    }
  }
  ++s.step_count;
  return event;
}

GridStep step(const GridEnvState& state, Action action) {
  GridStep out{state, {}};
  out.event = apply(out.state, action);
  return out;
}

std::vector<double> observe(const GridEnvState& s) {
  const int n = s.layout.size();
  std::vector<double> obs(static_cast<std::size_t>(n * n * kNumChannels), 0.0);
  auto idx = [&](Cell c, int ch) { return static_cast<std::size_t>((c.row * n + c.col) * kNumChannels + ch); };
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      if (s.layout.is_wall({r, c})) obs[idx({r, c}, kWallChannel)] = 1.0;
  for (std::size_t i = 0; i < s.layout.objects.size(); ++i) {
    if (s.removed[i]) continue;
    const auto& o = s.layout.objects[i];
    obs[idx(o.pos, o.type)] = 1.0;
  }
  obs[idx(s.agent, kPlayerChannel)] = 1.0;
  return obs;
}

std::optional<Action> demo_action(const GridEnvState& s) {
  if (s.done()) return std::nullopt;
  const TaskSpec& task = s.tasks[static_cast<std::size_t>(s.task_index)];
  if (is_target(s, s.agent, task.object_type)) return std::nullopt;

  const int n = s.layout.size();
  // first_dir[cell] = direction of the first move on the BFS tree path.
  std::vector<int> first_dir(static_cast<std::size_t>(n * n), -1);
  std::vector<int> dist(static_cast<std::size_t>(n * n), -1);
  std::deque<Cell> queue{s.agent};
  dist[static_cast<std::size_t>(s.agent.row * n + s.agent.col)] = 0;
  while (!queue.empty()) {
    const Cell cur = queue.front();
    queue.pop_front();
    const auto ci = static_cast<std::size_t>(cur.row * n + cur.col);
    for (int d = 0; d < 4; ++d) {
      const Cell next = neighbor(cur, d);
      if (s.layout.is_wall(next)) continue;
      const auto ni = static_cast<std::size_t>(next.row * n + next.col);
      if (dist[ni] >= 0) continue;
      dist[ni] = dist[ci] + 1;
      first_dir[ni] = dist[ci] == 0 ? d : first_dir[ci];
      if (is_target(s, next, task.object_type)) {
        if (task.kind == TaskKind::Pickup && dist[ni] == 1) return pickup_action(d);
        return move_action(first_dir[ni]);
      }
      queue.push_back(next);
    }
  }
  return std::nullopt;
}

std::optional<GridDemo> generate_demo(const GridEnvState& initial, int cap) {
  GridEnvState s = initial;
  GridDemo demo;
  while (!s.done()) {
    const auto action = demo_action(s);
    if (!action) return std::nullopt;
    if (static_cast<int>(demo.actions.size()) >= cap) return std::nullopt;
    const int before = s.task_index;
    apply(s, *action);
    demo.actions.push_back(*action);
    if (s.task_index != before && !s.done())
      demo.boundaries.push_back(static_cast<int>(demo.actions.size()) + 1);
  }
  return demo;
}

GridEpisode generate_episode(std::uint64_t seed, int num_tasks, TaskKind kind, int cap,
                             const GridConfig& config) {
  Rng rng(seed);
  for (int attempt = 0; attempt < config.max_retries; ++attempt) {
    GridEnvState inst = generate_instance(rng, num_tasks, kind, config);
    if (auto demo = generate_demo(inst, cap)) return {std::move(inst), std::move(*demo)};
  }
  throw std::runtime_error("grid episode: demo resampling exhausted for seed " + std::to_string(seed));
}

}  // namespace compile::grid
