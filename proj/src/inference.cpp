#include "compile/inference.hpp"

#include <cmath>
#include <stdexcept>

namespace compile {

using ad::Graph;

namespace {

int argmax_row(const Matrix& m, Eigen::Index row) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c)
    if (m(row, c) > m(row, best)) best = c;
  return static_cast<int>(best);
}

Matrix row_matrix(const std::vector<double>& v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
  return m;
}

}  // namespace

std::vector<Segmentation> segment_discrete(const CompILEModel& model, const Batch& batch, int segments) {
  const int m = segments > 0 ? segments : model.config().segments;
  Graph g(false);
  ForwardOptions fo;
  fo.mode = SampleMode::Argmax;
  fo.segments = m;
  fo.monotone = true;
  fo.with_policy = false;
  fo.with_termination = false;
  const ForwardOutput out = model.forward(g, batch, fo);
  const bool categorical = model.config().latent_kind == LatentKind::Categorical;

  std::vector<Segmentation> result(static_cast<std::size_t>(batch.batch));
  for (int b = 0; b < batch.batch; ++b) {
    Segmentation& s = result[static_cast<std::size_t>(b)];
    s.boundaries = out.boundaries[static_cast<std::size_t>(b)];
    s.code_vectors.resize(m, model.config().code_size());
    for (int i = 0; i < m; ++i) {
      const SegmentPass& pass = out.passes[static_cast<std::size_t>(i)];
      s.code_vectors.row(i) = pass.z_sample.value().row(b);
      if (categorical) s.codes.push_back(pass.z_choice[static_cast<std::size_t>(b)]);
    }
    s.segment_ids = segment_ids(s.boundaries, batch.lengths[static_cast<std::size_t>(b)]);
  }
  return result;
}

Segmentation segment_discrete(const CompILEModel& model, const EpisodeTensors& episode, int segments) {
  return segment_discrete(model, collate({&episode}), segments).front();
}

Reconstruction reconstruct_actions(const CompILEModel& model, const EpisodeTensors& episode,
                                   const Segmentation& segmentation) {
  const int steps = episode.length();
  if (static_cast<int>(segmentation.segment_ids.size()) != steps)
    throw std::invalid_argument("segmentation length does not match the episode");
  Matrix codes(steps, segmentation.code_vectors.cols());
  for (int t = 0; t < steps; ++t)
    codes.row(t) = segmentation.code_vectors.row(segmentation.segment_ids[static_cast<std::size_t>(t)]);

  Graph g(false);
  Reconstruction r;
  if (model.env().discrete_actions()) {
    const Matrix logp = model.action_log_probs(g, g.constant(episode.observations), g.constant(codes)).value();
    for (int t = 0; t < steps; ++t) r.action_ids.push_back(argmax_row(logp, t));
    r.actions = one_hot_rows(r.action_ids, model.env().action_size());
  } else {
    r.actions = model.action_means(g, g.constant(episode.observations), g.constant(codes)).value();
  }
  return r;
}

std::vector<bool> matched_steps(const EpisodeTensors& episode, const Reconstruction& rec) {
  std::vector<bool> out(static_cast<std::size_t>(episode.length()));
  for (int t = 0; t < episode.length(); ++t) {
    if (!rec.action_ids.empty()) {
      out[static_cast<std::size_t>(t)] =
          rec.action_ids[static_cast<std::size_t>(t)] == episode.action_ids[static_cast<std::size_t>(t)];
    } else {
      const double err = (rec.actions.row(t) - episode.actions.row(t)).cwiseAbs().maxCoeff();
      out[static_cast<std::size_t>(t)] = err <= kContinuousMatchTolerance;
    }
  }
  return out;
}

namespace {

// Shared control loop. Env: done(), alive(), completed(), observe(), and act(action) returning false on failure.
template <typename Env>
OnlineResult run_online(const CompILEModel& model, Env& env, const Segmentation& seg, const OnlineOptions& options) {
  OnlineResult res;
  const int m = static_cast<int>(seg.code_vectors.rows());
  int code = 0;
  auto term = model.termination_reset();
  while (!env.done() && res.steps < options.max_steps && env.alive()) {
    const Matrix obs = row_matrix(env.observe());
    Graph g(false);
    const Matrix codes = seg.code_vectors.row(code);
    Matrix action;
    if (model.env().discrete_actions()) {
      const Matrix logp = model.action_log_probs(g, g.constant(obs), g.constant(codes)).value();
      action = one_hot_rows({argmax_row(logp, 0)}, model.env().action_size());
    } else {
      action = model.action_means(g, g.constant(obs), g.constant(codes)).value();
    }
    ++res.steps;
    if (!env.act(action)) break;
    if (options.use_termination && code < m - 1 && model.termination_step(obs, action, term) > 0.5) {
      ++code;
      ++res.switches;
      term = model.termination_reset();
    }
  }
  res.tasks_completed = env.completed();
  res.reward = env.done() ? 100 : 0;
  return res;
}

struct GridRunner {
  grid::GridEnvState state;
  bool done() const { return state.done(); }
  bool alive() const { return true; }
  int completed() const { return state.task_index; }
  std::vector<double> observe() const { return grid::observe(state); }
  bool act(const Matrix& one_hot) {
    const int before = state.task_index;
    const auto ev = grid::apply(state, static_cast<grid::Action>(argmax_row(one_hot, 0)));
    // Picking up anything other than the current target fails the episode.
    return !(ev.kind == grid::GridEvent::Kind::Picked && state.task_index == before);
  }
};

struct ReacherRunner {
  reacher::ReacherState state;
  bool done() const { return state.done(); }
  bool alive() const { return !state.out_of_time(); }
  int completed() const { return state.task_index; }
  std::vector<double> observe() const { return reacher::observe(state); }
  bool act(const Matrix& a) {
    reacher::apply(state, {a(0, 0), a(0, 1)});
    return true;
  }
};

}  // namespace

OnlineResult execute_online(const CompILEModel& model, const EpisodeRecord& record, const Segmentation& seg,
                            const OnlineOptions& options) {
  if (!(record.spec() == model.env())) throw std::invalid_argument("record environment does not match the model");
  if (seg.code_vectors.rows() < 1) throw std::invalid_argument("segmentation has no codes");
  if (record.env == EnvKind::Grid) {
    GridRunner env{initial_grid_state(record)};
    return run_online(model, env, seg, options);
  }
  ReacherRunner env{initial_reacher_state(record)};
  return run_online(model, env, seg, options);
}

OnlineResult execute_online(const CompILEModel& model, const EpisodeRecord& record, const OnlineOptions& options) {
  if (record.tasks.empty()) return {100, 0, 0, 0};
  const EpisodeTensors ep = prepare_episode(record);
  const int m = options.use_termination ? static_cast<int>(record.tasks.size()) : 1;
  return execute_online(model, record, segment_discrete(model, ep, m), options);
}

nlohmann::json segmentation_report(const Segmentation& s, const EpisodeTensors* episode) {
  nlohmann::json j;
  j["boundaries"] = s.boundaries;
  if (!s.codes.empty()) {
    j["codes"] = s.codes;
  } else {
    nlohmann::json codes = nlohmann::json::array();
    for (Eigen::Index i = 0; i < s.code_vectors.rows(); ++i) {
      std::vector<double> row;
      for (Eigen::Index k = 0; k < s.code_vectors.cols(); ++k) row.push_back(s.code_vectors(i, k));
      codes.push_back(row);
    }
    j["codes"] = codes;
  }
  j["segment_ids"] = s.segment_ids;
  if (episode) j["true_boundaries"] = episode->boundaries;
  return j;
}

}  // namespace compile
