#include <set>

#include "compile/grid_env.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace compile;
using namespace compile::grid;

namespace {

GridLayout open_room(int n) {
  GridLayout layout(n);
  for (int i = 0; i < n; ++i) {
    layout.set_wall({0, i}, true);
    layout.set_wall({n - 1, i}, true);
    layout.set_wall({i, 0}, true);
    layout.set_wall({i, n - 1}, true);
  }
  return layout;
}

int channel_sum(const std::vector<double>& obs, int n, int ch) {
  double s = 0;
  for (int i = 0; i < n * n; ++i) s += obs[static_cast<std::size_t>(i * kNumChannels + ch)];
  return static_cast<int>(s);
}

}  // namespace

TEST_CASE("generate_instance contract and determinism") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = generate_instance(seed, 3, TaskKind::Pickup);
    CHECK(s.layout.objects.size() == 6);
    CHECK(s.tasks.size() == 3);
    CHECK(all_objects_reachable(s.layout));
    const int n = s.layout.size();
    for (int i = 0; i < n; ++i) {
      CHECK(s.layout.is_wall({0, i}));
      CHECK(s.layout.is_wall({i, n - 1}));
    }
    std::set<Cell> cells;
    for (const auto& o : s.layout.objects) {
      CHECK_FALSE(s.layout.is_wall(o.pos));
      cells.insert(o.pos);
    }
    CHECK(cells.size() == 6);
    CHECK_FALSE(s.layout.is_wall(s.agent));
    CHECK(cells.count(s.agent) == 0);
    for (const auto& t : s.tasks) {
      CHECK(std::any_of(s.layout.objects.begin(), s.layout.objects.end(),
                        [&](const GridObject& o) { return o.type == t.object_type; }));
    }
  }
  const auto a = generate_instance(7, 3, TaskKind::Visit);
  const auto b = generate_instance(7, 3, TaskKind::Visit);
  CHECK(a.layout == b.layout);
  CHECK(a.tasks == b.tasks);
  CHECK_THROWS_AS(generate_instance(1, 3, TaskKind::Reach), std::invalid_argument);
  CHECK_THROWS_AS(generate_instance(1, 0, TaskKind::Visit), std::invalid_argument);
}

TEST_CASE("interior wall keep fraction is about 0.2") {
  long kept = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    const int n = 10;
    const auto maze = generate_maze(n, rng);
    const auto layout = subsample_walls(maze, n, 0.2, rng);
    for (int r = 1; r < n - 1; ++r)
      for (int c = 1; c < n - 1; ++c)
        if (maze[static_cast<std::size_t>(r * n + c)]) {
          ++total;
          kept += layout.is_wall({r, c});
        }
  }
  const double frac = static_cast<double>(kept) / static_cast<double>(total);
  CHECK(frac == doctest::Approx(0.2).epsilon(0.25));  // within 0.05
}

TEST_CASE("step examples") {
  GridLayout layout = open_room(10);
  layout.set_wall({1, 2}, true);
  auto s = make_state(layout, {{TaskKind::Visit, 4}});
  s.agent = {1, 1};
  auto r = step(s, Action::MoveE);
  CHECK(r.state.agent == Cell{1, 1});
  CHECK(r.event.kind == GridEvent::Kind::Blocked);
  CHECK(r.state.step_count == 1);

  GridLayout l2 = open_room(10);
  l2.objects = {{4, {1, 2}}, {7, {2, 1}}};
  auto v = make_state(l2, {{TaskKind::Visit, 4}});
  v.agent = {1, 1};
  r = step(v, Action::MoveE);
  CHECK(r.state.agent == Cell{1, 2});
  CHECK(r.event == GridEvent{GridEvent::Kind::Visited, 4});
  CHECK(r.state.task_index == 1);

  auto p = make_state(l2, {{TaskKind::Pickup, 4}});
  p.agent = {1, 1};
  r = step(p, Action::PickS);
  CHECK(r.event == GridEvent{GridEvent::Kind::Picked, 7});
  CHECK(r.state.removed[1]);
  CHECK(r.state.task_index == 0);
}

TEST_CASE("observe channels") {
  GridLayout l = open_room(10);
  l.objects = {{4, {3, 3}}, {2, {5, 5}}};
  l.agent_start = {4, 4};
  auto s = make_state(l, {{TaskKind::Pickup, 4}});
  auto obs = observe(s);
  CHECK(obs.size() == 10 * 10 * 12);
  CHECK(channel_sum(obs, 10, kPlayerChannel) == 1);
  CHECK(channel_sum(obs, 10, kWallChannel) == 36);
  for (int i = 0; i < 10; ++i) {
    CHECK(obs[static_cast<std::size_t>((0 * 10 + i) * kNumChannels + kWallChannel)] == 1.0);
    CHECK(obs[static_cast<std::size_t>((i * 10 + 9) * kNumChannels + kWallChannel)] == 1.0);
  }
  CHECK(channel_sum(obs, 10, 4) == 1);
  s.agent = {3, 4};
  apply(s, Action::PickW);
  CHECK(channel_sum(observe(s), 10, 4) == 0);
}

TEST_CASE("demo examples") {
  GridLayout l = open_room(10);
  l.objects = {{4, {1, 3}}};
  l.agent_start = {1, 1};
  auto visit = generate_demo(make_state(l, {{TaskKind::Visit, 4}}));
  REQUIRE(visit);
  CHECK(visit->actions == std::vector<Action>{Action::MoveE, Action::MoveE});
  CHECK(visit->boundaries.empty());
  auto pick = generate_demo(make_state(l, {{TaskKind::Pickup, 4}}));
  REQUIRE(pick);
  CHECK(pick->actions == std::vector<Action>{Action::MoveE, Action::PickE});
}

TEST_CASE("demos are shortest paths and replay cleanly") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto kind = seed % 2 ? TaskKind::Visit : TaskKind::Pickup;
    const auto ep = generate_episode(seed, 3, kind, 200);
    CHECK(testing::count_suboptimal_legs(ep.initial, ep.demo.actions) == 0);
    CHECK(ep.demo.boundaries.size() == 2);
    GridEnvState s = ep.initial;
    std::vector<int> completions;
    for (std::size_t t = 0; t < ep.demo.actions.size(); ++t) {
      const int before = s.task_index;
      const auto ev = apply(s, ep.demo.actions[t]);
      if (ev.kind == GridEvent::Kind::Picked) CHECK(s.task_index == before + 1);
      if (s.task_index != before && !s.done()) completions.push_back(static_cast<int>(t) + 2);
    }
    CHECK(s.done());
    CHECK(completions == ep.demo.boundaries);
    const auto again = generate_episode(seed, 3, kind, 200);
    CHECK(again.demo.actions == ep.demo.actions);
  }
}

TEST_CASE("cap triggers resampling") {
  const auto ep = generate_episode(3, 5, TaskKind::Visit, 42);
  CHECK(ep.demo.actions.size() <= 42);
}
