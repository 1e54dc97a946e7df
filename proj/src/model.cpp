#include "compile/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace compile {

using ad::Graph;
using ad::Var;

std::string_view to_string(LatentKind v) { return v == LatentKind::Categorical ? "categorical" : "gaussian"; }
std::string_view to_string(Readout v) { return v == Readout::LastStep ? "last-step" : "attentive"; }
std::string_view to_string(Supervision v) {
  switch (v) {
    case Supervision::None: return "none";
    case Supervision::Z: return "z";
    case Supervision::B: return "b";
  }
  return "none";
}

LatentKind parse_latent_kind(std::string_view s) {
  if (s == "categorical") return LatentKind::Categorical;
  if (s == "gaussian") return LatentKind::Gaussian;
  throw std::invalid_argument("unknown latent kind '" + std::string(s) + "'");
}

Readout parse_readout(std::string_view s) {
  if (s == "last-step") return Readout::LastStep;
  if (s == "attentive") return Readout::Attentive;
  throw std::invalid_argument("unknown readout '" + std::string(s) + "'");
}

Supervision parse_supervision(std::string_view s) {
  if (s == "none") return Supervision::None;
  if (s == "z") return Supervision::Z;
  if (s == "b") return Supervision::B;
  throw std::invalid_argument("unknown supervision '" + std::string(s) + "'");
}

void CompILEConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  require(segments >= 1, "segments must be >= 1");
  require(latent_kind == LatentKind::Gaussian || latents >= 2, "latents must be >= 2");
  require(latent_kind == LatentKind::Categorical || latent_dim >= 1, "latent_dim must be >= 1");
  require(temperature > 0, "temperature must be > 0");
  require(poisson_rate > 0, "poisson rate must be > 0");
  require(beta >= 0 && beta <= 1, "beta must be in [0, 1]");
  require(hidden >= 4, "hidden must be >= 4");
  require(conv_channels >= 1, "conv_channels must be >= 1");
  require(termination_weight >= 0, "termination weight must be >= 0");
  require(!(supervision == Supervision::Z && latent_kind == LatentKind::Gaussian),
          "z supervision needs categorical latents");
}

nlohmann::json CompILEConfig::to_json() const {
  return {{"segments", segments},
          {"latents", latents},
          {"latent_dim", latent_dim},
          {"latent_kind", std::string(to_string(latent_kind))},
          {"temperature", temperature},
          {"poisson_rate", poisson_rate},
          {"beta", beta},
          {"hidden", hidden},
          {"conv_channels", conv_channels},
          {"readout", std::string(to_string(readout))},
          {"supervision", std::string(to_string(supervision))},
          {"termination_weight", termination_weight}};
}

CompILEConfig CompILEConfig::from_json(const nlohmann::json& j) {
  CompILEConfig c;
  c.segments = j.at("segments").get<int>();
  c.latents = j.at("latents").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.latent_kind = parse_latent_kind(j.at("latent_kind").get<std::string>());
  c.temperature = j.at("temperature").get<double>();
  c.poisson_rate = j.at("poisson_rate").get<double>();
  c.beta = j.at("beta").get<double>();
  c.hidden = j.at("hidden").get<int>();
  c.conv_channels = j.at("conv_channels").get<int>();
  c.readout = parse_readout(j.at("readout").get<std::string>());
  c.supervision = parse_supervision(j.at("supervision").get<std::string>());
  c.termination_weight = j.at("termination_weight").get<double>();
  c.validate();
  return c;
}

nlohmann::json env_to_json(const EnvSpec& env) {
  return {{"env", std::string(to_string(env.kind))}, {"grid_size", env.grid_size}};
}

EnvSpec env_from_json(const nlohmann::json& j) {
  EnvSpec e;
  e.kind = parse_env_kind(j.at("env").get<std::string>());
  e.grid_size = j.at("grid_size").get<int>();
  return e;
}

Var to_batch_major(const Var& column, int batch, int steps) {
  return ad::transpose(ad::reshape(column, steps, batch));
}

Var to_step_major(const Var& rows, int batch, int steps) {
  return ad::reshape(ad::transpose(rows), static_cast<Eigen::Index>(steps) * batch, 1);
}

Var sum_over_time(const Var& v, int batch, int steps) {
  const Eigen::Index c = v.cols();
  return ad::reshape(ad::col_sum(ad::reshape(v, steps, batch * c)), batch, c);
}

Var broadcast_to_steps(const Var& v, int batch, int steps) {
  std::vector<int> index(static_cast<std::size_t>(steps) * batch);
  for (int t = 0; t < steps; ++t)
    for (int b = 0; b < batch; ++b) index[static_cast<std::size_t>(t * batch + b)] = b;
  return ad::gather_rows(v, index);
}

int restricted_argmax(const Matrix& scores, int row, int lo, int hi) {
  if (lo > hi) return hi;
  int best = lo;
  for (int j = lo + 1; j <= hi; ++j)
    if (scores(row, j) > scores(row, best)) best = j;
  return best;
}

namespace {

// Column-selection operators used to mix per-head outputs.
Matrix expand_heads(int heads, int width) {  // heads x (heads*width)
  Matrix e = Matrix::Zero(heads, heads * width);
  for (int k = 0; k < heads; ++k) e.block(k, k * width, 1, width).setOnes();
  return e;
}

Matrix sum_heads(int heads, int width) {  // (heads*width) x width
  Matrix s = Matrix::Zero(heads * width, width);
  for (int k = 0; k < heads; ++k) s.block(k * width, 0, width, width).setIdentity();
  return s;
}

Matrix sum_within_heads(int heads, int width) {  // (heads*width) x heads
  Matrix s = Matrix::Zero(heads * width, heads);
  for (int k = 0; k < heads; ++k) s.block(k * width, k, width, 1).setOnes();
  return s;
}

Matrix tile_actions(int heads, int width) {  // width x (heads*width)
  Matrix r = Matrix::Zero(width, heads * width);
  for (int k = 0; k < heads; ++k) r.block(0, k * width, width, width).setIdentity();
  return r;
}

Var broadcast_row(const Var& row, Eigen::Index rows) {
  return ad::gather_rows(row, std::vector<int>(static_cast<std::size_t>(rows), 0));
}

Matrix padding_penalty(const Matrix& valid) {
  return valid.unaryExpr([](double v) { return v > 0 ? 0.0 : kIllegalLogit; });
}

}  // namespace

CompILEModel::CompILEModel(const CompILEConfig& config, const EnvSpec& env, std::uint64_t init_seed)
    : config_(config), env_(env) {
  config_.validate();
  Rng rng(init_seed);
  const int h = config_.hidden;
  const int act = env_.action_size();
  const int heads = num_heads();

  rec_embed_ = nn::StepEmbedder(params_, "recognition.embed", env_, h, config_.conv_channels, act, rng);
  rec_lstm_ = nn::make_lstm(params_, "recognition.lstm", h, h, rng);
  boundary_head_ = nn::make_mlp(params_, "recognition.boundary_head", {h, h, 1}, rng);
  const int z_width = config_.latent_kind == LatentKind::Categorical ? config_.latents : 2 * config_.latent_dim;
  z_head_ = nn::make_linear(params_, "recognition.z_head", h, z_width, rng);
  if (config_.readout == Readout::Attentive)
    attention_head_ = nn::make_linear(params_, "recognition.attention", h, 1, rng);

  policy_embed_ = nn::StepEmbedder(params_, "policy.embed", env_, h, config_.conv_channels, 0, rng);
  int hidden_in = h;
  if (config_.latent_kind == LatentKind::Gaussian) {
    latent_projection_ = nn::make_linear(params_, "policy.latent", config_.latent_dim, h, rng);
    hidden_in = 2 * h;
  }
  policy_hidden_ = nn::make_linear(params_, "policy.hidden", hidden_in, h, rng);
  policy_heads_ = nn::make_linear(params_, "policy.heads", h, heads * act, rng);
  if (!env_.discrete_actions()) log_std_ = &params_.add("policy.log_std", Matrix::Zero(1, heads * act));

  term_embed_ = nn::StepEmbedder(params_, "termination.embed", env_, h, config_.conv_channels, act, rng);
  term_lstm_ = nn::make_lstm(params_, "termination.lstm", h, h, rng);
  term_head_ = nn::make_mlp(params_, "termination.head", {h, h, h, 1}, rng);
}

Var CompILEModel::embed_step(Graph& g, const Var& observations, const Var& actions) const {
  return rec_embed_(g, observations, &actions);
}

Var CompILEModel::project_recognition_input(Graph& g, const Var& embeddings) const {
  return rec_lstm_.project_input(g, embeddings);
}

CompILEModel::RecognitionHeads CompILEModel::recognition_pass(Graph& g, const Var& projected, int batch, int steps,
                                                              const Var* mask) const {
  const Var hs = nn::run_masked_lstm(g, rec_lstm_, projected, batch, steps, mask);
  RecognitionHeads out;
  out.boundary_logits = to_batch_major(boundary_head_(g, hs), batch, steps);
  out.z_params = z_head_(g, hs);
  if (config_.readout == Readout::Attentive) out.attention = to_batch_major(attention_head_(g, hs), batch, steps);
  return out;
}

Var CompILEModel::readout(Graph& g, const RecognitionHeads& heads, const Var& weights, const Matrix& valid,
                          int batch, int steps) const {
  Var w = weights;
  if (config_.readout == Readout::Attentive) {
    Var scores = ad::add(heads.attention, ad::log_clamped(weights, 1e-30));
    w = ad::softmax_rows(ad::add(scores, g.constant(padding_penalty(valid))));
  }
  return sum_over_time(ad::mul_col(heads.z_params, to_step_major(w, batch, steps)), batch, steps);
}

Var CompILEModel::log_std(Graph& g) const {
  // Bounded below at -3 so deterministic demonstrations cannot collapse it.
  return ad::add_scalar(ad::softplus(ad::add_scalar(g.param(*log_std_), 3.0)), -3.0);
}

Var CompILEModel::policy_hidden(Graph& g, const Var& features, const Var* codes) const {
  if (config_.latent_kind == LatentKind::Gaussian) {
    if (!codes) throw std::invalid_argument("Gaussian latent policy needs codes");
    return ad::relu(policy_hidden_(g, ad::concat_cols({features, latent_projection_(g, *codes)})));
  }
  return ad::relu(policy_hidden_(g, features));
}

Var CompILEModel::head_log_likelihoods(Graph& g, const Var& hidden, const Batch& batch) const {
  const int heads = num_heads();
  const int act = env_.action_size();
  const Eigen::Index rows = hidden.rows();
  const Var out = policy_heads_(g, hidden);
  if (env_.discrete_actions()) {
    const Var logp = ad::log_softmax_rows(ad::reshape(out, rows * heads, act));
    std::vector<int> index(static_cast<std::size_t>(rows * heads));
    for (Eigen::Index r = 0; r < rows; ++r)
      for (int k = 0; k < heads; ++k)
        index[static_cast<std::size_t>(r * heads + k)] = batch.action_ids[static_cast<std::size_t>(r)];
    return ad::reshape(ad::pick(logp, index), rows, heads);
  }
  const Var actions = ad::matmul(g.constant(batch.actions), g.constant(tile_actions(heads, act)));
  const Var ls = broadcast_row(log_std(g), rows);
  const Var z = ad::mul(ad::sub(actions, out), ad::exp(ad::scale(ls, -1.0)));
  const Var term = ad::add_scalar(ad::sub(ad::scale(ad::square(z), -0.5), ls), -0.5 * std::log(2 * std::numbers::pi));
  return ad::matmul(term, g.constant(sum_within_heads(heads, act)));
}

Var CompILEModel::policy_outputs(Graph& g, const Var& observations, const Var& codes) const {
  const Var features = policy_embed_(g, observations, nullptr);
  return policy_heads_(g, policy_hidden(g, features, &codes));
}

Var CompILEModel::action_log_probs(Graph& g, const Var& observations, const Var& codes) const {
  if (!env_.discrete_actions()) throw std::logic_error("action_log_probs needs a discrete action space");
  const int heads = num_heads();
  const int act = env_.action_size();
  const Eigen::Index n = observations.rows();
  const Var out = policy_outputs(g, observations, codes);
  const Var logp = ad::reshape(ad::log_softmax_rows(ad::reshape(out, n * heads, act)), n, heads * act);
  if (heads == 1) return logp;
  const Var weights = ad::matmul(codes, g.constant(expand_heads(heads, act)));
  const Var mix = ad::matmul(ad::mul(ad::exp(logp), weights), g.constant(sum_heads(heads, act)));
  return ad::log_clamped(mix, 1e-300);
}

Var CompILEModel::action_means(Graph& g, const Var& observations, const Var& codes) const {
  if (env_.discrete_actions()) throw std::logic_error("action_means needs a continuous action space");
  const int heads = num_heads();
  const int act = env_.action_size();
  const Var out = policy_outputs(g, observations, codes);
  if (heads == 1) return out;
  const Var weights = ad::matmul(codes, g.constant(expand_heads(heads, act)));
  return ad::matmul(ad::mul(out, weights), g.constant(sum_heads(heads, act)));
}

Var CompILEModel::project_termination_input(Graph& g, const Var& observations, const Var& actions) const {
  return term_lstm_.project_input(g, term_embed_(g, observations, &actions));
}

Var CompILEModel::termination_logits(Graph& g, const Var& projected, int batch, int steps, const Var* mask) const {
  return term_head_(g, nn::run_masked_lstm(g, term_lstm_, projected, batch, steps, mask));
}

CompILEModel::TerminationState CompILEModel::termination_reset() const {
  return {Matrix::Zero(1, config_.hidden), Matrix::Zero(1, config_.hidden)};
}

double CompILEModel::termination_step(const Matrix& observation, const Matrix& action, TerminationState& state) const {
  Graph g(false);
  const Var projected = project_termination_input(g, g.constant(observation), g.constant(action));
  const auto next = term_lstm_.step(g, projected, {g.constant(state.h), g.constant(state.c)});
  state.h = next.h.value();
  state.c = next.c.value();
  const double logit = term_head_(g, next.h).value()(0, 0);
  return 1.0 / (1.0 + std::exp(-logit));
}

ForwardOutput CompILEModel::forward(Graph& g, const Batch& batch, const ForwardOptions& opt) const {
  if (!(batch.env == env_)) throw std::invalid_argument("batch environment does not match the model");
  const int B = batch.batch;
  const int T = batch.steps;
  const int M = opt.segments > 0 ? opt.segments : config_.segments;
  const bool categorical = config_.latent_kind == LatentKind::Categorical;
  if (opt.forced_boundaries) {
    if (static_cast<int>(opt.forced_boundaries->size()) != B) throw std::invalid_argument("forced boundaries: batch");
    for (const auto& fb : *opt.forced_boundaries)
      if (static_cast<int>(fb.size()) != M - 1)
        throw std::invalid_argument("forced boundaries: expected " + std::to_string(M - 1) + " per episode");
  }
  if (opt.forced_codes) {
    if (!categorical) throw std::invalid_argument("forced codes need categorical latents");
    if (static_cast<int>(opt.forced_codes->size()) != B) throw std::invalid_argument("forced codes: batch");
    for (const auto& fc : *opt.forced_codes)
      if (static_cast<int>(fc.size()) != M) throw std::invalid_argument("forced codes: expected one per segment");
  }

  ForwardOutput out;
  out.segments = M;
  out.batch = B;
  out.steps = T;
  out.passes.resize(static_cast<std::size_t>(M));

  const Var obs = g.constant(batch.observations);
  const Var acts = g.constant(batch.actions);
  const Var projected = project_recognition_input(g, embed_step(g, obs, acts));

  Matrix cumsum = Matrix::Zero(T, T);
  for (int j = 0; j < T; ++j)
    for (int s = j + 1; s < T; ++s) cumsum(j, s) = 1.0;
  const Var u = g.constant(cumsum);

  Var prefix = g.constant(Matrix::Ones(B, T));
  std::vector<int> prev(static_cast<std::size_t>(B), -1);
  for (int i = 0; i < M; ++i) {
    SegmentPass& pass = out.passes[static_cast<std::size_t>(i)];
    const RecognitionHeads heads = recognition_pass(g, projected, B, T, i == 0 ? nullptr : &prefix);
    out.soft.masks.push_back(prefix);

    Var y, segprob, next_prefix;
    if (i < M - 1) {
      Matrix legal = batch.valid;
      if (opt.monotone) {
        for (int b = 0; b < B; ++b) {
          const int len = batch.lengths[static_cast<std::size_t>(b)];
          auto [lo, hi] = boundary_range(prev[static_cast<std::size_t>(b)], i, M - 1, len);
          hi = std::clamp(hi, 0, len - 1);
          lo = std::min(lo, hi);
          legal.row(b).setZero();
          legal.block(b, lo, 1, hi - lo + 1).setOnes();
        }
      }
      const CategoricalDraw draw = draw_categorical(g, heads.boundary_logits, &legal, opt.temperature, opt.mode,
                                                    {opt.noise_seed, 0, static_cast<std::uint64_t>(i)});
      pass.boundary_log_q = draw.log_q;
      if (opt.forced_boundaries) {
        std::vector<int> pos(static_cast<std::size_t>(B));
        for (int b = 0; b < B; ++b) {
          const int len = batch.lengths[static_cast<std::size_t>(b)];
          const int bnd = (*opt.forced_boundaries)[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
          if (bnd < 2 || bnd > len + 1) throw std::invalid_argument("forced boundary outside {2..T+1}");
          pos[static_cast<std::size_t>(b)] = boundary_to_position(bnd);
        }
        y = g.constant(one_hot_rows(pos, T));
        prev = pos;
      } else {
        y = draw.sample;
        prev = draw.choice;
      }
      pass.boundary_sample = y;
      pass.boundary_choice = prev;
      const Var cdf = ad::matmul(y, u);
      segprob = ad::mul(ad::one_minus(cdf), prefix);
      next_prefix = ad::mul(prefix, cdf);
    } else {
      std::vector<int> last(static_cast<std::size_t>(B));
      for (int b = 0; b < B; ++b) last[static_cast<std::size_t>(b)] = batch.lengths[static_cast<std::size_t>(b)] - 1;
      y = g.constant(one_hot_rows(last, T));
      segprob = prefix;
    }
    out.soft.segprobs.push_back(segprob);

    pass.z_params = readout(g, heads, config_.readout == Readout::LastStep ? y : segprob, batch.valid, B, T);
    const NoiseKey z_noise{opt.noise_seed, 1, static_cast<std::uint64_t>(i)};
    if (categorical) {
      const CategoricalDraw zd = draw_categorical(g, pass.z_params, nullptr, opt.temperature, opt.mode, z_noise);
      pass.z_log_q = zd.log_q;
      pass.z_choice = zd.choice;
      if (opt.forced_codes) {
        std::vector<int> codes(static_cast<std::size_t>(B));
        for (int b = 0; b < B; ++b)
          codes[static_cast<std::size_t>(b)] = (*opt.forced_codes)[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
        pass.z_choice = codes;
        Matrix hot = one_hot_rows(codes, config_.latents);
        pass.z_log_sample = g.constant(hot.unaryExpr([](double v) { return v > 0 ? 0.0 : kLogZero; }));
        pass.z_sample = g.constant(std::move(hot));
      } else {
        pass.z_sample = zd.sample;
        pass.z_log_sample = zd.log_sample;
      }
    } else {
      const int d = config_.latent_dim;
      const Var mean = ad::slice_cols(pass.z_params, 0, d);
      if (opt.mode == SampleMode::Argmax) {
        pass.z_sample = mean;
      } else {
        Matrix eps(B, d);
        for (int b = 0; b < B; ++b)
          for (int k = 0; k < d; ++k) eps(b, k) = NoiseKey{opt.noise_seed, 2, static_cast<std::uint64_t>(i)}.normal(b, k);
        const Var std_dev = ad::exp(ad::scale(ad::slice_cols(pass.z_params, d, d), 0.5));
        pass.z_sample = ad::add(mean, ad::mul(std_dev, g.constant(eps)));
      }
    }
    if (i < M - 1) prefix = next_prefix;
  }

  // Hard segmentation used for termination targets and reporting.
  out.boundaries.assign(static_cast<std::size_t>(B), {});
  for (int b = 0; b < B; ++b) {
    auto& bs = out.boundaries[static_cast<std::size_t>(b)];
    if (opt.forced_boundaries) {
      bs = (*opt.forced_boundaries)[static_cast<std::size_t>(b)];
      continue;
    }
    const int len = batch.lengths[static_cast<std::size_t>(b)];
    int p = -1;
    for (int i = 0; i < M - 1; ++i) {
      auto [lo, hi] = boundary_range(p, i, M - 1, len);
      hi = std::clamp(hi, 0, len - 1);
      p = restricted_argmax(out.passes[static_cast<std::size_t>(i)].boundary_log_q.value(), b, std::min(lo, hi), hi);
      bs.push_back(position_to_boundary(p));
    }
  }

  if (opt.with_policy) {
    const Var features = policy_embed_(g, obs, nullptr);
    if (categorical) {
      const Var per_head = head_log_likelihoods(g, policy_hidden(g, features, nullptr), batch);
      for (auto& pass : out.passes)
        pass.step_log_likelihood = ad::logsumexp_rows(ad::add(per_head, broadcast_to_steps(pass.z_log_sample, B, T)));
    } else {
      for (auto& pass : out.passes) {
        const Var codes = broadcast_to_steps(pass.z_sample, B, T);
        pass.step_log_likelihood = head_log_likelihoods(g, policy_hidden(g, features, &codes), batch);
      }
    }
  }

  if (opt.with_termination) {
    Matrix hard_y = Matrix::Zero(std::max(M - 1, 0), T);
    std::vector<Var> ys;
    std::vector<std::vector<int>> pos(static_cast<std::size_t>(M - 1), std::vector<int>(static_cast<std::size_t>(B)));
    for (int i = 0; i < M - 1; ++i) {
      for (int b = 0; b < B; ++b)
        pos[static_cast<std::size_t>(i)][static_cast<std::size_t>(b)] =
            boundary_to_position(out.boundaries[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)]);
      ys.push_back(g.constant(one_hot_rows(pos[static_cast<std::size_t>(i)], T)));
    }
    const SoftSegmentation hard = segment_probs_and_masks(g, ys, B, T);
    const Var term_in = project_termination_input(g, obs, acts);
    for (int i = 0; i < M; ++i) {
      SegmentPass& pass = out.passes[static_cast<std::size_t>(i)];
      const Var& mask = hard.masks[static_cast<std::size_t>(i)];
      pass.termination_logits = termination_logits(g, term_in, B, T, i == 0 ? nullptr : &mask);
      pass.termination_target = Matrix::Zero(static_cast<Eigen::Index>(T) * B, 1);
      pass.termination_weight = Matrix::Zero(static_cast<Eigen::Index>(T) * B, 1);
      const Matrix& ind = hard.segprobs[static_cast<std::size_t>(i)].value();
      for (int b = 0; b < B; ++b) {
        const int len = batch.lengths[static_cast<std::size_t>(b)];
        const int end = i < M - 1 ? pos[static_cast<std::size_t>(i)][static_cast<std::size_t>(b)] : len - 1;
        for (int t = 0; t < len; ++t)
          pass.termination_weight(static_cast<Eigen::Index>(t) * B + b, 0) = ind(b, t);
        pass.termination_target(static_cast<Eigen::Index>(end) * B + b, 0) = 1.0;
      }
    }
  }
  return out;
}

}  // namespace compile
