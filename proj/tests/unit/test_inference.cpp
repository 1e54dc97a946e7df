#include "compile/evaluation.hpp"
#include "compile/inference.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace compile;
using namespace testing;

TEST_CASE("segment_discrete contract") {
  auto eps = prepare_all(generate_records(small_grid_options(12, 3, 21)));
  CompILEModel model(tiny_config(3, 4, 8), small_grid_env(), 1);
  for (const auto& e : eps) {
    for (int m : {1, 2, 3}) {
      const Segmentation s = segment_discrete(model, e, m);
      CHECK(static_cast<int>(s.boundaries.size()) == m - 1);
      CHECK(s.codes.size() == static_cast<std::size_t>(m));
      CHECK(s.code_vectors.rows() == m);
      for (std::size_t i = 0; i < s.boundaries.size(); ++i) {
        CHECK(s.boundaries[i] >= 2);
        CHECK(s.boundaries[i] <= e.length() + 1);
        if (i > 0) CHECK(s.boundaries[i] > s.boundaries[i - 1]);
      }
      CHECK(s.segment_ids == segment_ids(s.boundaries, e.length()));
    }
  }
}

TEST_CASE("batched and single segmentation agree") {
  auto eps = prepare_all(generate_records(small_grid_options(6, 2, 22)));
  CompILEModel model(tiny_config(2, 4, 8), small_grid_env(), 2);
  const auto all = segment_discrete(model, batch_of(eps));
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const auto one = segment_discrete(model, eps[i]);
    CHECK(one.boundaries == all[i].boundaries);
    CHECK(one.codes == all[i].codes);
  }
}

TEST_CASE("segmentation ignores the training temperature") {
  auto eps = prepare_all(generate_records(small_grid_options(4, 2, 23)));
  auto c1 = tiny_config(2, 4, 8);
  auto c2 = c1;
  c2.temperature = 0.1;
  CompILEModel a(c1, small_grid_env(), 4), b(c2, small_grid_env(), 4);
  for (const auto& e : eps) {
    CHECK(segment_discrete(a, e).boundaries == segment_discrete(b, e).boundaries);
    CHECK(segment_discrete(a, e).codes == segment_discrete(b, e).codes);
  }
}

TEST_CASE("reconstruction uses the head of each step's code") {
  auto eps = prepare_all(generate_records(small_grid_options(4, 2, 24)));
  CompILEModel model(tiny_config(2, 4, 8), small_grid_env(), 5);
  const auto& e = eps[0];
  Segmentation s = segment_discrete(model, e);
  const auto rec = reconstruct_actions(model, e, s);
  CHECK(static_cast<int>(rec.action_ids.size()) == e.length());
  // Replace the second code; steps of the first segment keep their actions.
  Segmentation other = s;
  other.code_vectors.row(1) = one_hot_rows({(s.codes[1] + 1) % 4}, 4);
  const auto rec2 = reconstruct_actions(model, e, other);
  for (int t = 0; t < e.length(); ++t)
    if (s.segment_ids[static_cast<std::size_t>(t)] == 0)
      CHECK(rec.action_ids[static_cast<std::size_t>(t)] == rec2.action_ids[static_cast<std::size_t>(t)]);
  // With a single one-hot code everything comes from head k alone.
  ad::Graph g(false);
  const Matrix code = one_hot_rows({2}, 4);
  Matrix codes(e.length(), 4);
  for (int t = 0; t < e.length(); ++t) codes.row(t) = code;
  const Matrix logp = model.action_log_probs(g, g.constant(e.observations), g.constant(codes)).value();
  CHECK((logp.array().exp().rowwise().sum() - 1.0).abs().maxCoeff() < 1e-9);
}

TEST_CASE("online execution edge cases") {
  auto recs = generate_records(small_grid_options(3, 2, 25));
  CompILEModel model(tiny_config(2, 4, 8), small_grid_env(), 6);
  EpisodeRecord solved = recs[0];
  solved.tasks.clear();
  CHECK(execute_online(model, solved).reward == 100);

  // An untrained policy stays within the step budget.
  const auto r = execute_online(model, recs[1]);
  CHECK((r.reward == 0 || r.reward == 100));
  CHECK(r.steps <= 200);
  OnlineOptions short_run;
  short_run.max_steps = 1;
  CHECK(execute_online(model, recs[1], short_run).reward == 0);
}

TEST_CASE("random-action decoder reconstructs about 1/8 of grid steps") {
  // Independent Monte Carlo of the metric definition with uniform guesses.
  auto eps = prepare_all(generate_records(small_grid_options(200, 3, 26)));
  Rng rng(1);
  double hits = 0, steps = 0;
  for (const auto& e : eps) {
    Reconstruction rec;
    for (int t = 0; t < e.length(); ++t) rec.action_ids.push_back(static_cast<int>(rng.uniform_int(0, 7)));
    for (bool m : matched_steps(e, rec)) hits += m;
    steps += e.length();
  }
  CHECK(hits / steps == doctest::Approx(0.125).epsilon(0.15));
}

TEST_CASE("replaying the demonstration reconstructs perfectly") {
  auto eps = prepare_all(generate_records(small_grid_options(5, 2, 27)));
  for (const auto& e : eps) {
    Reconstruction rec;
    rec.action_ids = e.action_ids;
    for (bool m : matched_steps(e, rec)) CHECK(m);
  }
}

TEST_CASE("segmentation report") {
  auto eps = prepare_all(generate_records(small_grid_options(1, 2, 28)));
  CompILEModel model(tiny_config(2, 4, 8), small_grid_env(), 6);
  const auto s = segment_discrete(model, eps[0]);
  const auto j = segmentation_report(s, &eps[0]);
  CHECK(j["boundaries"].size() == 1);
  CHECK(j["codes"].size() == 2);
  CHECK(j["segment_ids"].size() == static_cast<std::size_t>(eps[0].length()));
  CHECK(j["true_boundaries"] == eps[0].boundaries);
}
