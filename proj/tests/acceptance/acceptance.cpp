// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance               run everything
//   acceptance --only 1,3,8  run a subset
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "compile/evaluation.hpp"
#include "compile/training.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "scaled_runs.hpp"

using namespace compile;
using namespace testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Random relaxed boundary samples; column sums and mask monotonicity.
Outcome mask_algebra() {
  Rng rng(2024);
  double worst_sum = 0;
  int monotone_violations = 0;
  for (int s = 0; s < 10000; ++s) {
    const int t = static_cast<int>(rng.uniform_int(1, 20));
    const int m = static_cast<int>(rng.uniform_int(2, 5));
    ad::Graph g(false);
    Matrix logits(m - 1, t);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.uniform(-4, 4);
    const double tau = rng.uniform(0.1, 2.0);
    const auto draw = draw_categorical(g, g.constant(logits), nullptr, tau, SampleMode::Relaxed,
                                       {static_cast<std::uint64_t>(s), 0, 0});
    const auto seg = segment_probs_and_masks(draw.sample.value());
    for (int c = 0; c < t; ++c) {
      worst_sum = std::max(worst_sum, std::abs(seg.segprobs.col(c).sum() - 1.0));
      for (int i = 1; i < m; ++i)
        if (seg.masks(i, c) > seg.masks(i - 1, c) + 1e-12) ++monotone_violations;
    }
  }
  return {worst_sum <= 1e-6 && monotone_violations == 0,
          "max |column sum - 1| = " + fmt("%.2e", worst_sum) + " (tol 1e-6), mask increases: " +
              std::to_string(monotone_violations) + ", 10000 samples"};
}

// Every hard placement with T <= 8, M <= 3 against C_i = [max_{j<i} b_j, b_i).
Outcome discrete_soft_consistency() {
  long placements = 0, mismatches = 0;
  for (int t = 1; t <= 8; ++t) {
    for (int m = 1; m <= 3; ++m) {
      std::vector<int> b(static_cast<std::size_t>(m - 1), 2);
      while (true) {
        Matrix y = Matrix::Zero(m - 1, t);
        for (int i = 0; i < m - 1; ++i) y(i, boundary_to_position(b[static_cast<std::size_t>(i)])) = 1.0;
        const auto seg = segment_probs_and_masks(y);
        for (int i = 0; i < m; ++i) {
          int start = 1;
          for (int j = 0; j < i; ++j) start = std::max(start, b[static_cast<std::size_t>(j)]);
          const int end = i < m - 1 ? b[static_cast<std::size_t>(i)] : t + 1;
          for (int step = 1; step <= t; ++step) {
            const double member = (step >= start && step < end) ? 1.0 : 0.0;
            const double visible = step >= start ? 1.0 : 0.0;
            if (seg.segprobs(i, step - 1) != member || seg.masks(i, step - 1) != visible) ++mismatches;
          }
        }
        ++placements;
        int k = 0;
        while (k < m - 1 && ++b[static_cast<std::size_t>(k)] > t + 1) b[static_cast<std::size_t>(k++)] = 2;
        if (k == m - 1) break;
      }
    }
  }
  return {mismatches == 0, std::to_string(placements) + " placements, " + std::to_string(mismatches) +
                               " indicator mismatches (exact comparison)"};
}

// Full-model central differences, relative error |a - n| / max(|a|, |n|, 1e-6).
Outcome gradient_check() {
  auto eps = prepare_all(generate_records(small_grid_options(40, 2, 0)));
  std::vector<EpisodeTensors> two;
  for (const auto& e : eps)
    if (e.length() >= 6 && two.size() < 2) two.push_back(truncate(e, two.empty() ? 6 : 5));
  const Batch batch = batch_of(two);
  CompILEModel model(tiny_config(2, 3, 8), small_grid_env(), 1);
  const LossOptions lo{42, 1.0};
  auto loss = [&] {
    ad::Graph g(false);
    return elbo_loss(g, model, batch, lo).values.total;
  };
  model.params().zero_grad();
  {
    ad::Graph g(true);
    const auto rep = elbo_loss(g, model, batch, lo);
    g.backward(rep.total);
  }
  const double h = 1e-5;
  double worst = 0;
  std::string where;
  std::size_t count = 0;
  for (auto* p : model.params().all()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double saved = p->value.data()[i];
      p->value.data()[i] = saved + h;
      const double up = loss();
      p->value.data()[i] = saved - h;
      const double down = loss();
      p->value.data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p->grad.data()[i];
      const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      if (rel > worst) {
        worst = rel;
        where = p->name;
      }
      ++count;
    }
  }
  return {worst < 1e-4, "max relative error " + fmt("%.2e", worst) + " (tol 1e-4) over " + std::to_string(count) +
                            " parameters, worst in " + where + "; h = 1e-5, denominator floor 1e-6"};
}

// Mean single-sample ELBO against exact enumeration (T=4, M=2, K=2).
Outcome elbo_bound() {
  auto eps = prepare_all(generate_records(small_grid_options(40, 2, 5)));
  std::vector<EpisodeTensors> one;
  for (const auto& e : eps)
    if (e.length() >= 4 && one.empty()) one.push_back(truncate(e, 4));
  const Batch batch = batch_of(one);
  CompILEModel model(tiny_config(2, 2, 8), small_grid_env(), 6);
  const double exact = exact_log_likelihood(model, batch);
  const int n = 1024;
  double sum = 0, sq = 0;
  for (int s = 0; s < n; ++s) {
    const double v = discrete_elbo_sample(model, batch, static_cast<std::uint64_t>(s));
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt(std::max(sq / n - mean * mean, 0.0) / (n - 1));
  return {mean <= exact + 3 * se, "mean ELBO " + fmt("%.5f", mean) + " vs exact log p " + fmt("%.5f", exact) +
                                      " (3 SE = " + fmt("%.2e", 3 * se) + ", " + std::to_string(n) + " samples)"};
}

Outcome poisson() {
  const auto p = truncated_poisson(3.0, 3);
  bool ok = std::abs(p[0] - 0.25) < 1e-15 && std::abs(p[1] - 0.375) < 1e-15 && std::abs(p[2] - 0.375) < 1e-15;
  Rng rng(5);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const auto q = truncated_poisson(rng.uniform(0.05, 30.0), static_cast<int>(rng.uniform_int(1, 300)));
    double s = 0;
    for (double v : q) s += v;
    worst = std::max(worst, std::abs(s - 1));
  }
  ok = ok && worst < 1e-12;
  return {ok, "lambda=3, D=3 -> [" + fmt("%.17g", p[0]) + ", " + fmt("%.17g", p[1]) + ", " + fmt("%.17g", p[2]) +
                  "]; max |sum - 1| over 100 draws " + fmt("%.1e", worst)};
}

Outcome demonstrator_optimality() {
  int bad_legs = 0, legs = 0;
  for (int i = 0; i < 200; ++i) {
    const TaskKind kind = i % 2 == 0 ? TaskKind::Pickup : TaskKind::Visit;
    const auto ep = grid::generate_episode(static_cast<std::uint64_t>(7000 + i), 3, kind, 200);
    bad_legs += count_suboptimal_legs(ep.initial, ep.demo.actions);
    legs += static_cast<int>(ep.initial.tasks.size());
  }
  return {bad_legs == 0, std::to_string(legs) + " legs on 200 instances (10x10, 3 tasks), " +
                             std::to_string(bad_legs) + " differ from the relaxation shortest-path oracle"};
}

Outcome reacher_controller() {
  int done = 0;
  for (int i = 0; i < 500; ++i)
    if (reacher::generate_demo(reacher::generate_instance(static_cast<std::uint64_t>(11000 + i), 3))) ++done;
  const double rate = done / 500.0;
  return {rate >= 0.95, std::to_string(done) + "/500 instances completed within 100 steps (" +
                            fmt("%.1f", 100 * rate) + "%, need >= 95%)"};
}

Outcome metric_suite() {
  struct Case {
    std::vector<int> pred, truth;
    int tol;
    double f1;
  };
  const std::vector<Case> cases{{{4, 8}, {4, 8}, 0, 1.0}, {{4, 9}, {4, 8}, 0, 0.5}, {{4, 9}, {4, 8}, 1, 1.0},
                                {{}, {4}, 0, 0.0}};
  int failures = 0;
  for (const auto& c : cases) {
    const double got = f1_score(c.pred, c.truth, c.tol);
    if (std::abs(got - c.f1) > 1e-12 || std::abs(got - brute_force_f1(c.pred, c.truth, c.tol)) > 1e-12) ++failures;
  }
  if (boundary_accuracy({4, 9}, {4, 8}) != 0.5) ++failures;
  Rng rng(99);
  int random_checked = 0;
  for (int i = 0; i < 5000; ++i) {
    auto draw = [&] {
      std::set<int> s;
      const int n = static_cast<int>(rng.uniform_int(0, 5));
      for (int k = 0; k < n; ++k) s.insert(static_cast<int>(rng.uniform_int(2, 16)));
      return std::vector<int>(s.begin(), s.end());
    };
    const auto p = draw(), t = draw();
    for (int tol : {0, 1}) {
      if (std::abs(f1_score(p, t, tol) - brute_force_f1(p, t, tol)) > 1e-12) ++failures;
      ++random_checked;
    }
    if (f1_score(p, t, 1) < f1_score(p, t, 0)) ++failures;
  }
  return {failures == 0, std::to_string(cases.size() + 1) + " worked examples and " + std::to_string(random_checked) +
                             " random set pairs against brute-force matching, " + std::to_string(failures) +
                             " failures"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string only;
  app.add_option("--only", only, "comma-separated criterion numbers");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  std::stringstream ss(only);
  for (std::string tok; std::getline(ss, tok, ',');)
    if (!tok.empty()) selected.insert(std::stoi(tok));
  auto wanted = [&](int id) { return selected.empty() || selected.count(id) != 0; };

  std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria{
      {1, {"mask algebra", mask_algebra}},
      {2, {"discrete/soft consistency", discrete_soft_consistency}},
      {3, {"gradient check", gradient_check}},
      {4, {"ELBO bound", elbo_bound}},
      {5, {"truncated Poisson", poisson}},
      {6, {"BFS demonstrator optimality", demonstrator_optimality}},
      {7, {"reacher controller", reacher_controller}},
      {11, {"metric unit suite", metric_suite}},
  };

  ScaledRuns scaled;
  criteria[8] = {"scaled b-supervised reproduction", [&] {
                   const auto r = scaled.supervised();
                   return Outcome{r.pass, r.detail};
                 }};
  criteria[9] = {"scaled unsupervised vs surprisal", [&] {
                   const auto r = scaled.unsupervised_vs_surprisal();
                   return Outcome{r.pass, r.detail};
                 }};
  criteria[10] = {"generalization to 3 tasks", [&] {
                    const auto r = scaled.generalization();
                    return Outcome{r.pass, r.detail};
                  }};

  int failed = 0;
  for (const auto& [id, entry] : criteria) {
    if (!wanted(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = entry.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failed;
    std::printf("%s criterion %2d  %-34s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, entry.first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
