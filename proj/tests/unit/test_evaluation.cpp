#include "compile/evaluation.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace compile;

TEST_CASE("F1 worked examples") {
  CHECK(f1_score({4, 8}, {4, 8}, 0) == 1.0);
  CHECK(f1_score({4, 9}, {4, 8}, 0) == doctest::Approx(0.5));
  CHECK(f1_score({4, 9}, {4, 8}, 1) == 1.0);
  CHECK(f1_score({}, {4}, 0) == 0.0);
  CHECK(f1_score({}, {}, 0) == 1.0);
  for (auto [p, t, tol] : std::vector<std::tuple<std::vector<int>, std::vector<int>, int>>{
           {{4, 8}, {4, 8}, 0}, {{4, 9}, {4, 8}, 0}, {{4, 9}, {4, 8}, 1}, {{}, {4}, 0}})
    CHECK(f1_score(p, t, tol) == doctest::Approx(testing::brute_force_f1(p, t, tol)));
}

TEST_CASE("one-to-one matching keeps F1 at most 1") {
  // Two predictions within tolerance of a single truth.
  CHECK(f1_score({4, 5}, {4}, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(f1_score({3, 4, 5}, {4}, 1) == doctest::Approx(0.5));
}

TEST_CASE("greedy F1 agrees with brute-force matching") {
  compile::Rng rng(17);
  for (int trial = 0; trial < 3000; ++trial) {
    auto draw = [&](int n) {
      std::vector<int> v;
      for (int i = 0; i < n; ++i) v.push_back(static_cast<int>(rng.uniform_int(2, 14)));
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
      return v;
    };
    const auto p = draw(static_cast<int>(rng.uniform_int(0, 5)));
    const auto t = draw(static_cast<int>(rng.uniform_int(0, 5)));
    for (int tol : {0, 1}) CHECK(f1_score(p, t, tol) == doctest::Approx(testing::brute_force_f1(p, t, tol)));
    CHECK(f1_score(p, t, 1) >= f1_score(p, t, 0));
    CHECK(f1_score(p, t, 0) >= 0.0);
    CHECK(f1_score(p, t, 1) <= 1.0);
  }
}

TEST_CASE("boundary accuracy") {
  CHECK(boundary_accuracy({4, 9}, {4, 8}) == 0.5);
  CHECK(boundary_accuracy({4, 8}, {4, 8}) == 1.0);
  CHECK(boundary_accuracy({}, {4}) == 0.0);
  CHECK(boundary_accuracy({}, {}) == 1.0);
}

TEST_CASE("aggregation") {
  std::vector<EpisodeMetrics> eps(2);
  eps[0].truth = {4};
  eps[0].boundary_accuracy = 1;
  eps[0].f1_tol0 = 1;
  eps[0].f1_tol1 = 1;
  eps[0].reconstruction = 1.0;
  eps[0].exact_match = true;
  eps[0].online_reward = 100;
  eps[1].truth = {3};
  eps[1].reconstruction = 0.5;
  eps[1].exact_match = false;
  eps[1].online_reward = 0;
  const auto r = aggregate("m", 2, eps);
  CHECK(r.num_tasks == 2);
  CHECK(r.boundary_accuracy == 0.5);
  CHECK(*r.reconstruction == 0.75);
  CHECK(*r.exact_match == 0.5);
  CHECK(*r.exact_match <= *r.reconstruction);
  CHECK(*r.online == 50);
  const auto j = report_to_json(r);
  CHECK(j["episodes"].size() == 2);
  CHECK(j["metrics"]["online_reward"] == 50.0);
}
