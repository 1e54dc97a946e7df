#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "compile/dataset.hpp"
#include "doctest.h"

using namespace compile;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("compile_test_" + name);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

GenerationOptions grid_opts(int episodes, int tasks, std::uint64_t seed) {
  GenerationOptions o;
  o.env = EnvKind::Grid;
  o.episodes = episodes;
  o.num_tasks = tasks;
  o.kind = TaskKind::Pickup;
  o.master_seed = seed;
  return o;
}

}  // namespace

TEST_CASE("grid dataset round trip and determinism") {
  const auto path = temp_path("grid.jsonl");
  write_dataset(grid_opts(4, 3, 0), path);
  const auto text = read_file(path);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  const auto records = load_dataset(path);
  REQUIRE(records.size() == 4);
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].boundaries.size() == 2);
    CHECK(records[i].seed == i);
    CHECK(replay_validate(records[i]).ok);
  }
  CHECK(records == generate_records(grid_opts(4, 3, 0)));
  const auto path2 = temp_path("grid2.jsonl");
  write_dataset(grid_opts(4, 3, 0), path2);
  CHECK(read_file(path2) == text);
  CHECK(text.rfind("{\"env\":\"grid\",\"seed\":0,\"walls\":", 0) == 0);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("reacher dataset") {
  GenerationOptions o;
  o.env = EnvKind::Reacher;
  o.episodes = 2;
  o.num_tasks = 5;
  o.kind = TaskKind::Reach;
  o.master_seed = 9;
  const auto path = temp_path("reacher.jsonl");
  write_dataset(o, path);
  const auto records = load_dataset(path);
  REQUIRE(records.size() == 2);
  for (const auto& r : records) {
    CHECK(r.boundaries.size() == 4);
    const auto res = replay_validate(r);
    CHECK_MESSAGE(res.ok, res.message);
  }
  CHECK(records == generate_records(o));
  std::filesystem::remove(path);
}

TEST_CASE("load errors") {
  const auto path = temp_path("bad.jsonl");
  {
    std::ofstream out(path);
  }
  CHECK(load_dataset(path).empty());

  auto line = to_json_line(generate_record(grid_opts(1, 3, 0), 0));
  const auto b0 = line.find("\"boundaries\":[");
  const auto b1 = line.find(']', b0);
  std::string bad = line.substr(0, b0) + "\"boundaries\":[5,3" + line.substr(b1);
  {
    std::ofstream out(path);
    out << line << "\n" << bad << "\n";
  }
  try {
    load_dataset(path);
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    CHECK(e.line() == 2);
    CHECK(e.field() == "boundaries");
  }
  {
    std::ofstream out(path);
    out << "{\"env\":\"mujoco\",\"seed\":1}\n";
  }
  CHECK_THROWS_AS(load_dataset(path), DatasetError);
  {
    std::ofstream out(path);
    out << "{not json\n";
  }
  try {
    load_dataset(path);
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    CHECK(e.line() == 1);
  }
  std::filesystem::remove(path);
}

TEST_CASE("replay_validate detects tampering") {
  auto r = generate_record(grid_opts(1, 3, 0), 5);
  REQUIRE(replay_validate(r).ok);

  auto flipped = r;
  flipped.grid_actions[3] = (flipped.grid_actions[3] + 1) % grid::kNumActions;
  auto res = replay_validate(flipped);
  CHECK_FALSE(res.ok);
  CHECK(res.step == 4);

  auto shifted = r;
  shifted.boundaries[0] += 1;
  res = replay_validate(shifted);
  CHECK_FALSE(res.ok);
  CHECK(res.message.find("boundary") != std::string::npos);

  auto digest = r;
  digest.digest_agent.row += 1;
  CHECK_FALSE(replay_validate(digest).ok);
}

TEST_CASE("make_batch padding") {
  auto a = prepare_episode(generate_record(grid_opts(1, 1, 0), 1));
  auto b = prepare_episode(generate_record(grid_opts(1, 2, 0), 2));
  a.observations.conservativeResize(3, Eigen::NoChange);
  a.actions.conservativeResize(3, Eigen::NoChange);
  a.action_ids.resize(3);
  b.observations.conservativeResize(5, Eigen::NoChange);
  b.actions.conservativeResize(5, Eigen::NoChange);
  b.action_ids.resize(5);
  const auto batch = collate({&a, &b});
  CHECK(batch.steps == 5);
  CHECK(batch.lengths == std::vector<int>{3, 5});
  CHECK(batch.padded_steps(0) == 2);
  CHECK(batch.padded_steps(1) == 0);
  CHECK(batch.valid.row(0).sum() == 3);
  CHECK(batch.action_ids[static_cast<std::size_t>(3 * 2 + 0)] == -1);
  CHECK(batch.action_ids[static_cast<std::size_t>(1 * 2 + 1)] == b.action_ids[1]);
  CHECK(batch.observations.row(2 * 2 + 0) == a.observations.row(2));
  CHECK(batch.observations.row(4 * 2 + 0).isZero());

  const auto single = collate({&b});
  CHECK(single.valid.minCoeff() == 1.0);
  CHECK_THROWS_AS(collate({&b}, 4), std::invalid_argument);

  // Observation of the first step matches the environment.
  const auto rec = generate_record(grid_opts(1, 3, 0), 3);
  const auto prepared = prepare_episode(rec);
  const auto obs = grid::observe(initial_grid_state(rec));
  for (std::size_t k = 0; k < obs.size(); ++k) CHECK(prepared.observations(0, static_cast<Eigen::Index>(k)) == obs[k]);
}
