#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "compile/training.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace compile;
using namespace testing;

TEST_CASE("truncated Poisson closed forms") {
  const auto p = truncated_poisson(3.0, 3);
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.375).epsilon(1e-14));
  CHECK(p[2] == doctest::Approx(0.375).epsilon(1e-14));
  const auto q = truncated_poisson(1.0, 2);
  CHECK(q[0] == doctest::Approx(2.0 / 3.0));
  CHECK(q[1] == doctest::Approx(1.0 / 3.0));
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const auto r = truncated_poisson(rng.uniform(0.1, 20.0), static_cast<int>(rng.uniform_int(1, 200)));
    CHECK(std::accumulate(r.begin(), r.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(truncated_poisson(0.0, 3), std::invalid_argument);
  CHECK_THROWS_AS(truncated_poisson(1.0, 0), std::invalid_argument);
}

TEST_CASE("KL terms are non-negative and vanish at the prior") {
  auto eps = prepare_all(generate_records(small_grid_options(3, 2, 1)));
  const Batch batch = batch_of(eps);
  CompILEModel model(tiny_config(2, 3, 8), small_grid_env(), 2);
  ad::Graph g(false);
  const auto out = model.forward(g, batch, {});
  CHECK(kl_z_term(g, model, out).value()(0, 0) >= 0);
  CHECK(kl_b_term(g, model, out, batch).value()(0, 0) >= 0);

  // Hand-built posteriors.
  ForwardOutput fake;
  fake.segments = 2;
  fake.passes.resize(2);
  const double k = 3;
  fake.passes[0].z_log_q = g.constant(Matrix::Constant(1, 3, -std::log(k)));
  fake.passes[1].z_log_q = g.constant((Matrix(1, 3) << 0.0, kLogZero, kLogZero).finished());
  CHECK(kl_z_term(g, model, fake).value()(0, 0) == doctest::Approx(std::log(k)));

  Batch one;
  one.batch = 1;
  one.steps = 4;
  one.lengths = {3};
  const auto prior = truncated_poisson(model.config().poisson_rate, 3);
  Matrix lq = Matrix::Constant(1, 4, kIllegalLogit);
  for (int j = 0; j < 3; ++j) lq(0, j) = std::log(prior[static_cast<std::size_t>(j)]);
  fake.passes[0].boundary_log_q = g.constant(lq);
  CHECK(std::abs(kl_b_term(g, model, fake, one).value()(0, 0)) < 1e-12);
}

TEST_CASE("beta = 0 without supervision is the masked negative log-likelihood") {
  auto eps = prepare_all(generate_records(small_grid_options(2, 2, 3)));
  const Batch batch = batch_of(eps);
  auto cfg = tiny_config(2, 3, 8);
  cfg.beta = 0;
  cfg.termination_weight = 0;
  CompILEModel model(cfg, small_grid_env(), 4);
  ad::Graph g(false);
  const auto rep = elbo_loss(g, model, batch, {7, 1.0});
  CHECK(rep.values.total == doctest::Approx(rep.values.recon).epsilon(1e-12));
  CHECK(rep.values.recon > 0);
}

TEST_CASE("single-sample ELBO does not exceed the exact likelihood") {
  auto eps = prepare_all(generate_records(small_grid_options(20, 2, 5)));
  std::vector<EpisodeTensors> one;
  for (const auto& e : eps)
    if (e.length() >= 4) {
      one.push_back(truncate(e, 4));
      break;
    }
  REQUIRE(one.size() == 1);
  const Batch batch = batch_of(one);
  CompILEModel model(tiny_config(2, 2, 8), small_grid_env(), 6);
  const double exact = exact_log_likelihood(model, batch);
  double sum = 0, sq = 0;
  const int n = 256;
  for (int s = 0; s < n; ++s) {
    const double v = discrete_elbo_sample(model, batch, static_cast<std::uint64_t>(s));
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt(std::max(sq / n - mean * mean, 0.0) / n);
  CHECK(mean <= exact + 3 * se);
  CHECK(std::isfinite(exact));
}

TEST_CASE("training is deterministic and reduces the loss") {
  auto data = prepare_all(generate_records(small_grid_options(64, 2, 7)));
  auto cfg = tiny_config(2, 4, 16);
  TrainOptions opts;
  opts.iterations = 100;
  opts.batch_size = 16;
  opts.learning_rate = 3e-3;
  opts.seed = 1;
  CompILEModel m1(cfg, small_grid_env(), 1), m2(cfg, small_grid_env(), 1);
  const auto c1 = train(m1, data, opts);
  const auto c2 = train(m2, data, opts);
  REQUIRE(c1.size() == 100);
  for (std::size_t i = 0; i < c1.size(); ++i) CHECK(c1[i].total == c2[i].total);
  auto mean = [&](std::size_t from, std::size_t to) {
    double s = 0;
    for (std::size_t i = from; i < to; ++i) s += c1[i].total;
    return s / static_cast<double>(to - from);
  };
  CHECK(mean(90, 100) < mean(0, 10));
}

TEST_CASE("loss csv and checkpoints") {
  auto data = prepare_all(generate_records(small_grid_options(8, 2, 8)));
  CompILEModel model(tiny_config(2, 4, 8), small_grid_env(), 1);
  const auto dir = std::filesystem::temp_directory_path() / "compile_train_test";
  std::filesystem::create_directories(dir);
  TrainOptions opts;
  opts.iterations = 3;
  opts.batch_size = 4;
  opts.loss_csv = dir / "loss.csv";
  opts.checkpoint_path = dir / "model.ckpt";
  train(model, data, opts);
  std::ifstream in(opts.loss_csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "iteration,total,recon,kl_z,kl_b,term_bce,sup");
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == 3);
  const auto ck = load_checkpoint(opts.checkpoint_path);
  const auto header_json = nlohmann::json::parse(ck.header_json);
  CHECK(header_json["model"] == "compile");
  CHECK(header_json["iteration"] == 3);
  CompILEModel fresh(CompILEConfig::from_json(header_json["config"]), env_from_json(header_json["env"]), 99);
  assign_parameters(fresh.params(), ck.params);
  CHECK(fresh.params().get("policy.heads.weight").value == model.params().get("policy.heads.weight").value);
  std::filesystem::remove_all(dir);
}

TEST_CASE("supervision mismatches are rejected") {
  auto data = prepare_all(generate_records(small_grid_options(2, 2, 9)));
  auto cfg = tiny_config(3, 4, 8);
  cfg.supervision = Supervision::B;
  CompILEModel model(cfg, small_grid_env(), 1);
  ad::Graph g(false);
  CHECK_THROWS_AS(elbo_loss(g, model, batch_of(data), {}), std::invalid_argument);
}
