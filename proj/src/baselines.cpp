#include "compile/baselines.hpp"

#include <algorithm>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace compile {

using ad::Graph;
using ad::Var;

void SurprisalConfig::validate() const {
  if (hidden < 4) throw std::invalid_argument("hidden must be >= 4");
  if (conv_channels < 1) throw std::invalid_argument("conv_channels must be >= 1");
}

nlohmann::json SurprisalConfig::to_json() const { return {{"hidden", hidden}, {"conv_channels", conv_channels}}; }

SurprisalConfig SurprisalConfig::from_json(const nlohmann::json& j) {
  SurprisalConfig c;
  c.hidden = j.at("hidden").get<int>();
  c.conv_channels = j.at("conv_channels").get<int>();
  c.validate();
  return c;
}

SurprisalModel::SurprisalModel(const SurprisalConfig& config, const EnvSpec& env, std::uint64_t init_seed)
    : config_(config), env_(env) {
  config_.validate();
  Rng rng(init_seed);
  const int h = config_.hidden;
  const int act = env_.action_size();
  embed_ = nn::StepEmbedder(params_, "surprisal.embed", env_, h, config_.conv_channels, act, rng);
  lstm_ = nn::make_lstm(params_, "surprisal.lstm", h, h, rng);
  hidden_ = nn::make_linear(params_, "surprisal.hidden", h, h, rng);
  head_ = nn::make_linear(params_, "surprisal.head", h, act, rng);
  if (!env_.discrete_actions()) log_std_ = &params_.add("surprisal.log_std", Matrix::Zero(1, act));
}

Var SurprisalModel::step_log_likelihood(Graph& g, const Batch& batch) const {
  if (!(batch.env == env_)) throw std::invalid_argument("batch environment does not match the model");
  const int B = batch.batch;
  const int T = batch.steps;
  const Eigen::Index rows = static_cast<Eigen::Index>(T) * B;
  Matrix previous = Matrix::Zero(rows, batch.actions.cols());
  if (T > 1) previous.bottomRows(rows - B) = batch.actions.topRows(rows - B);
  const Var prev = g.constant(previous);
  const Var obs = g.constant(batch.observations);
  const Var hs = nn::run_masked_lstm(g, lstm_, lstm_.project_input(g, embed_(g, obs, &prev)), B, T, nullptr);
  const Var out = head_(g, ad::relu(hidden_(g, hs)));

  Matrix valid(rows, 1);
  for (int t = 0; t < T; ++t)
    for (int b = 0; b < B; ++b) valid(static_cast<Eigen::Index>(t) * B + b, 0) = batch.valid(b, t);

  Var ll;
  if (env_.discrete_actions()) {
    ll = ad::pick(ad::log_softmax_rows(out), batch.action_ids);
  } else {
    const Var ls_row = ad::add_scalar(ad::softplus(ad::add_scalar(g.param(*log_std_), 3.0)), -3.0);
    const Var ls = ad::matmul(g.constant(Matrix::Ones(rows, 1)), ls_row);
    const Var z = ad::mul(ad::sub(g.constant(batch.actions), out), ad::exp(ad::scale(ls, -1.0)));
    const Var term = ad::add_scalar(ad::sub(ad::scale(ad::square(z), -0.5), ls), -0.5 * std::log(2 * std::numbers::pi));
    ll = ad::matmul(term, g.constant(Matrix::Ones(env_.action_size(), 1)));
  }
  return ad::mul(ll, g.constant(valid));
}

LossReport SurprisalModel::loss(Graph& g, const Batch& batch) const {
  const double norm = std::accumulate(batch.lengths.begin(), batch.lengths.end(), 0.0);
  LossReport rep;
  rep.total = ad::scale(ad::sum(step_log_likelihood(g, batch)), -1.0 / norm);
  rep.values.total = rep.total.value()(0, 0);
  rep.values.recon = rep.values.total;
  return rep;
}

std::string surprisal_header(const SurprisalConfig& config, const EnvSpec& env) {
  nlohmann::json h{{"model", "surprisal"}, {"config", config.to_json()}, {"env", env_to_json(env)}};
  return h.dump();
}

std::vector<LossValues> surprisal_train(SurprisalModel& model, const std::vector<EpisodeTensors>& data,
                                        const TrainOptions& options) {
  TrainOptions opts = options;
  if (opts.checkpoint_header.empty()) opts.checkpoint_header = surprisal_header(model.config(), model.env());
  return train_loop(model.params(), data, opts,
                    [&](Graph& g, const Batch& batch, int) { return model.loss(g, batch); });
}

std::vector<double> surprisal_log_likelihoods(const SurprisalModel& model, const EpisodeTensors& episode) {
  Graph g(false);
  const Matrix ll = model.step_log_likelihood(g, collate({&episode})).value();
  return {ll.data(), ll.data() + ll.rows()};
}

std::vector<int> surprisal_boundaries(const std::vector<double>& likelihoods, int segments) {
  std::vector<int> steps;  // 1-based candidate steps
  for (int t = 2; t <= static_cast<int>(likelihoods.size()); ++t) steps.push_back(t);
  std::stable_sort(steps.begin(), steps.end(), [&](int a, int b) {
    return likelihoods[static_cast<std::size_t>(a - 1)] < likelihoods[static_cast<std::size_t>(b - 1)];
  });
  steps.resize(std::min(steps.size(), static_cast<std::size_t>(std::max(segments - 1, 0))));
  std::sort(steps.begin(), steps.end());
  return steps;
}

std::vector<int> surprisal_segment(const SurprisalModel& model, const EpisodeTensors& episode, int segments) {
  return surprisal_boundaries(surprisal_log_likelihoods(model, episode), segments);
}

CompILEConfig vae_bc_config(CompILEConfig base, int latent_dim) {
  base.segments = 1;
  base.latent_kind = LatentKind::Gaussian;
  base.latent_dim = latent_dim;
  base.supervision = Supervision::None;
  base.termination_weight = 0;
  base.validate();
  return base;
}

std::vector<LossValues> vae_bc_train(CompILEModel& model, const std::vector<EpisodeTensors>& data,
                                     const TrainOptions& options) {
  if (model.config().segments != 1 || model.config().latent_kind != LatentKind::Gaussian)
    throw std::invalid_argument("VAE-BC needs one segment and a Gaussian latent");
  TrainOptions opts = options;
  if (opts.checkpoint_header.empty()) opts.checkpoint_header = model_header("vae-bc", model.config(), model.env());
  return train(model, data, opts);
}

OnlineResult vae_bc_execute(const CompILEModel& model, const EpisodeRecord& record, int max_steps) {
  return execute_online(model, record, OnlineOptions{max_steps, false});
}

}  // namespace compile
