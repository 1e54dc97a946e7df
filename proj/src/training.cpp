#include "compile/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

#include "compile/log.hpp"

namespace compile {

using ad::Graph;
using ad::Var;

std::vector<double> truncated_poisson(double rate, int support) {
  if (rate <= 0) throw std::invalid_argument("truncated_poisson: rate must be positive");
  if (support < 1) throw std::invalid_argument("truncated_poisson: support must be >= 1");
  std::vector<double> logp(static_cast<std::size_t>(support));
  double top = -std::numeric_limits<double>::infinity();
  for (int d = 1; d <= support; ++d) {
    logp[static_cast<std::size_t>(d - 1)] = d * std::log(rate) - std::lgamma(d + 1.0);
    top = std::max(top, logp[static_cast<std::size_t>(d - 1)]);
  }
  double z = 0;
  for (double& v : logp) z += (v = std::exp(v - top));
  for (double& v : logp) v /= z;
  return logp;
}

namespace {

Matrix step_major_values(const Matrix& batch_major) {
  const Eigen::Index b = batch_major.rows(), t = batch_major.cols();
  Matrix out(b * t, 1);
  for (Eigen::Index s = 0; s < t; ++s)
    for (Eigen::Index i = 0; i < b; ++i) out(s * b + i, 0) = batch_major(i, s);
  return out;
}

double total_steps(const Batch& batch) {
  double n = 0;
  for (int l : batch.lengths) n += l;
  return n;
}

}  // namespace

Var kl_z_term(Graph& g, const CompILEModel& model, const ForwardOutput& out) {
  const auto& cfg = model.config();
  Var total = g.constant(Matrix::Zero(1, 1));
  for (const auto& pass : out.passes) {
    if (cfg.latent_kind == LatentKind::Categorical) {
      const Var q = ad::exp(pass.z_log_q);
      total = ad::add(total, ad::sum(ad::mul(q, ad::add_scalar(pass.z_log_q, std::log(cfg.latents)))));
    } else {
      const int d = cfg.latent_dim;
      const Var mean = ad::slice_cols(pass.z_params, 0, d);
      const Var logvar = ad::slice_cols(pass.z_params, d, d);
      const Var kl = ad::add_scalar(ad::sub(ad::add(ad::square(mean), ad::exp(logvar)), logvar), -1.0);
      total = ad::add(total, ad::scale(ad::sum(kl), 0.5));
    }
  }
  return total;
}

Var kl_b_term(Graph& g, const CompILEModel& model, const ForwardOutput& out, const Batch& batch) {
  if (out.segments < 2) return g.constant(Matrix::Zero(1, 1));
  Matrix log_prior = Matrix::Zero(batch.batch, batch.steps);
  for (int b = 0; b < batch.batch; ++b) {
    const int len = batch.lengths[static_cast<std::size_t>(b)];
    const auto prior = truncated_poisson(model.config().poisson_rate, len);
    for (int j = 0; j < len; ++j) log_prior(b, j) = std::log(prior[static_cast<std::size_t>(j)]);
  }
  const Var& log_q = out.passes.front().boundary_log_q;
  const Var kl = ad::sum(ad::mul(ad::exp(log_q), ad::sub(log_q, g.constant(std::move(log_prior)))));
  return ad::scale(kl, static_cast<double>(out.segments));
}

LossReport elbo_loss(Graph& g, const CompILEModel& model, const Batch& batch, const LossOptions& options) {
  const auto& cfg = model.config();
  const bool sup_b = cfg.supervision == Supervision::B;
  const bool sup_z = cfg.supervision == Supervision::Z;
  const int M = cfg.segments;

  std::vector<std::vector<int>> forced_b, forced_z;
  ForwardOptions fo;
  fo.mode = SampleMode::Relaxed;
  fo.noise_seed = options.noise_seed;
  fo.temperature = options.temperature;
  if (sup_b) {
    for (const auto& bs : batch.boundaries) {
      if (static_cast<int>(bs.size()) != M - 1)
        throw std::invalid_argument("b supervision: episode has " + std::to_string(bs.size()) +
                                    " boundaries but the model uses " + std::to_string(M) + " segments");
    }
    forced_b = batch.boundaries;
    fo.forced_boundaries = &forced_b;
  }
  if (sup_z) {
    for (const auto& tt : batch.task_types) {
      if (static_cast<int>(tt.size()) != M)
        throw std::invalid_argument("z supervision: task count does not match the number of segments");
      for (int t : tt)
        if (t >= cfg.latents) throw std::invalid_argument("z supervision: task type exceeds latent count");
    }
    forced_z = batch.task_types;
    fo.forced_codes = &forced_z;
  }
  fo.with_termination = cfg.termination_weight > 0;

  const ForwardOutput out = model.forward(g, batch, fo);
  const double norm = total_steps(batch);
  const Var valid = g.constant(step_major_values(batch.valid));

  LossReport rep;
  Var recon = g.constant(Matrix::Zero(1, 1));
  for (int i = 0; i < M; ++i) {
    const auto& pass = out.passes[static_cast<std::size_t>(i)];
    const Var w = ad::mul(to_step_major(out.soft.segprobs[static_cast<std::size_t>(i)], batch.batch, batch.steps), valid);
    const Var li = ad::sum(ad::mul(pass.step_log_likelihood, w));
    rep.segment_recon.push_back(li.value()(0, 0));
    recon = ad::add(recon, li);
  }
  rep.kl_z = kl_z_term(g, model, out);
  rep.kl_b = kl_b_term(g, model, out, batch);

  Var total = ad::scale(ad::sub(ad::scale(ad::add(rep.kl_z, rep.kl_b), cfg.beta), recon), 1.0 / norm);

  Var sup = g.constant(Matrix::Zero(1, 1));
  if (sup_b) {
    for (int i = 0; i < M - 1; ++i) {
      std::vector<int> pos;
      for (const auto& bs : batch.boundaries) pos.push_back(boundary_to_position(bs[static_cast<std::size_t>(i)]));
      sup = ad::sub(sup, ad::sum(ad::pick(out.passes[static_cast<std::size_t>(i)].boundary_log_q, pos)));
    }
  }
  if (sup_z) {
    for (int i = 0; i < M; ++i) {
      std::vector<int> codes;
      for (const auto& tt : batch.task_types) codes.push_back(tt[static_cast<std::size_t>(i)]);
      sup = ad::sub(sup, ad::sum(ad::pick(out.passes[static_cast<std::size_t>(i)].z_log_q, codes)));
    }
  }
  sup = ad::scale(sup, 1.0 / batch.batch);
  total = ad::add(total, sup);

  Var term = g.constant(Matrix::Zero(1, 1));
  if (fo.with_termination) {
    for (const auto& pass : out.passes) {
      const Var& x = pass.termination_logits;
      const Var bce = ad::sub(ad::softplus(x), ad::mul(x, g.constant(pass.termination_target)));
      term = ad::add(term, ad::sum(ad::mul(bce, g.constant(pass.termination_weight))));
    }
    term = ad::scale(term, 1.0 / norm);
    total = ad::add(total, ad::scale(term, cfg.termination_weight));
  }

  rep.total = total;
  rep.values.total = total.value()(0, 0);
  rep.values.recon = -recon.value()(0, 0) / norm;
  rep.values.kl_z = rep.kl_z.value()(0, 0) / norm;
  rep.values.kl_b = rep.kl_b.value()(0, 0) / norm;
  rep.values.term_bce = term.value()(0, 0);
  rep.values.sup = sup.value()(0, 0);
  return rep;
}

namespace {

void require_enumerable(const CompILEModel& model, const Batch& episode) {
  if (model.config().segments != 2 || model.config().latent_kind != LatentKind::Categorical)
    throw std::invalid_argument("discrete ELBO needs M = 2 and categorical latents");
  if (episode.batch != 1) throw std::invalid_argument("discrete ELBO works on one episode");
}

double sum_log_likelihood(const ForwardOutput& out, const Batch& episode) {
  double total = 0;
  for (std::size_t i = 0; i < out.passes.size(); ++i) {
    const Matrix& ll = out.passes[i].step_log_likelihood.value();
    const Matrix& seg = out.soft.segprobs[i].value();
    for (int t = 0; t < episode.lengths[0]; ++t)
      if (seg(0, t) > 0) total += seg(0, t) * ll(t, 0);
  }
  return total;
}

}  // namespace

double discrete_elbo_sample(const CompILEModel& model, const Batch& episode, std::uint64_t noise_seed) {
  require_enumerable(model, episode);
  Graph g(false);
  ForwardOptions fo;
  fo.mode = SampleMode::Discrete;
  fo.noise_seed = noise_seed;
  fo.with_termination = false;
  const ForwardOutput out = model.forward(g, episode, fo);
  const int len = episode.lengths[0];
  const int j = out.passes[0].boundary_choice[0];
  const auto prior = truncated_poisson(model.config().poisson_rate, len);
  double log_q = out.passes[0].boundary_log_q.value()(0, j);
  for (const auto& pass : out.passes) log_q += pass.z_log_q.value()(0, pass.z_choice[0]);
  const double log_prior = std::log(prior[static_cast<std::size_t>(j)]) - 2 * std::log(model.config().latents);
  return sum_log_likelihood(out, episode) + log_prior - log_q;
}

double exact_log_likelihood(const CompILEModel& model, const Batch& episode) {
  require_enumerable(model, episode);
  const int len = episode.lengths[0];
  const int k = model.config().latents;
  const auto prior = truncated_poisson(model.config().poisson_rate, len);
  std::vector<double> terms;
  for (int j = 0; j < len; ++j)
    for (int z1 = 0; z1 < k; ++z1)
      for (int z2 = 0; z2 < k; ++z2) {
        Graph g(false);
        std::vector<std::vector<int>> fb{{position_to_boundary(j)}}, fz{{z1, z2}};
        ForwardOptions fo;
        fo.mode = SampleMode::Argmax;
        fo.forced_boundaries = &fb;
        fo.forced_codes = &fz;
        fo.with_termination = false;
        const ForwardOutput out = model.forward(g, episode, fo);
        terms.push_back(sum_log_likelihood(out, episode) + std::log(prior[static_cast<std::size_t>(j)]) -
                        2 * std::log(k));
      }
  const double top = *std::max_element(terms.begin(), terms.end());
  double s = 0;
  for (double v : terms) s += std::exp(v - top);
  return top + std::log(s);
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossValues>& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "iteration,total,recon,kl_z,kl_b,term_bce,sup\n";
  out << std::setprecision(10);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const auto& v = curve[i];
    out << i + 1 << ',' << v.total << ',' << v.recon << ',' << v.kl_z << ',' << v.kl_b << ',' << v.term_bce << ','
        << v.sup << '\n';
  }
}

std::string model_header(const std::string& kind, const CompILEConfig& config, const EnvSpec& env) {
  nlohmann::json h{{"model", kind}, {"config", config.to_json()}, {"env", env_to_json(env)}};
  return h.dump();
}

std::vector<LossValues> train_loop(ParameterStore& params, const std::vector<EpisodeTensors>& data,
                                   const TrainOptions& options, const LossFn& loss) {
  if (data.empty()) throw std::invalid_argument("training data is empty");
  if (options.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  Rng rng(mix64(options.seed ^ 0x7261696eULL));
  Adam adam(AdamOptions{options.learning_rate});
  std::vector<LossValues> curve;
  curve.reserve(static_cast<std::size_t>(std::max(options.iterations, 0)));

  auto save = [&](int iteration) {
    nlohmann::json header = options.checkpoint_header.empty() ? nlohmann::json::object()
                                                              : nlohmann::json::parse(options.checkpoint_header);
    header["iteration"] = iteration;
    save_checkpoint(options.checkpoint_path, header.dump(), params);
  };

  for (int it = 1; it <= options.iterations; ++it) {
    std::vector<const EpisodeTensors*> picks;
    for (int b = 0; b < options.batch_size; ++b)
      picks.push_back(&data[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1))]);
    const Batch batch = collate(picks);

    params.zero_grad();
    LossValues values;
    {
      Graph g(true);
      const LossReport rep = loss(g, batch, it);
      values = rep.values;
      if (!std::isfinite(values.total))
        throw std::runtime_error("loss diverged (non-finite) at iteration " + std::to_string(it));
      g.backward(rep.total);
    }
    adam.step(params);
    curve.push_back(values);
    if (options.on_iteration) options.on_iteration(it, values);
    log_debug("iter " + std::to_string(it) + " loss " + std::to_string(values.total));
    if (options.checkpoint_every > 0 && !options.checkpoint_path.empty() && it % options.checkpoint_every == 0)
      save(it);
  }
  if (!options.checkpoint_path.empty()) save(options.iterations);
  if (!options.loss_csv.empty()) write_loss_csv(options.loss_csv, curve);
  return curve;
}

std::vector<LossValues> train(CompILEModel& model, const std::vector<EpisodeTensors>& data, const TrainOptions& options) {
  const double t0 = model.config().temperature;
  TrainOptions opts = options;
  if (opts.checkpoint_header.empty())
    opts.checkpoint_header = model_header(model.config().segments == 1 && model.config().latent_kind == LatentKind::Gaussian
                                              ? "vae-bc"
                                              : "compile",
                                          model.config(), model.env());
  auto loss = [&](Graph& g, const Batch& batch, int it) {
    double tau = t0;
    if (options.final_temperature > 0 && options.iterations > 1)
      tau = t0 + (options.final_temperature - t0) * (it - 1) / (options.iterations - 1);
    LossOptions lo;
    lo.noise_seed = mix64(options.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(it));
    lo.temperature = tau;
    return elbo_loss(g, model, batch, lo);
  };
  return train_loop(model.params(), data, opts, loss);
}

}  // namespace compile
