#include "compile/evaluation.hpp"

#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace compile {

double f1_score(const std::vector<int>& predicted, const std::vector<int>& truth, int tol) {
  if (predicted.empty() && truth.empty()) return 1.0;
  if (predicted.empty() || truth.empty()) return 0.0;
  std::vector<int> pred = predicted;
  std::sort(pred.begin(), pred.end());
  std::vector<bool> used(truth.size(), false);
  int matched = 0;
  for (int p : pred) {
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (!used[i] && std::abs(p - truth[i]) <= tol) {
        used[i] = true;
        ++matched;
        break;
      }
    }
  }
  const double precision = static_cast<double>(matched) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(matched) / static_cast<double>(truth.size());
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

double boundary_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (truth.empty()) return predicted.empty() ? 1.0 : 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (i < predicted.size() && predicted[i] == truth[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

namespace {

EpisodeMetrics boundary_metrics(std::vector<int> predicted, std::vector<int> truth) {
  EpisodeMetrics m;
  m.boundary_accuracy = boundary_accuracy(predicted, truth);
  m.f1_tol0 = f1_score(predicted, truth, 0);
  m.f1_tol1 = f1_score(predicted, truth, 1);
  m.predicted = std::move(predicted);
  m.truth = std::move(truth);
  return m;
}

std::string model_name(const CompILEModel& model) {
  const auto& c = model.config();
  if (c.segments == 1 && c.latent_kind == LatentKind::Gaussian) return "vae-bc";
  if (c.supervision == Supervision::None) return "compile";
  return std::string(to_string(c.supervision)) + "-compile";
}

}  // namespace

MetricsReport aggregate(std::string model, int segments, std::vector<EpisodeMetrics> episodes) {
  MetricsReport r;
  r.model = std::move(model);
  r.segments = segments;
  const double n = static_cast<double>(episodes.size());
  if (episodes.empty()) throw std::invalid_argument("no episodes to evaluate");
  double recon = 0, exact = 0, online = 0;
  bool has_recon = true, has_online = true;
  std::optional<int> tasks;
  bool mixed = false;
  for (const auto& e : episodes) {
    r.boundary_accuracy += e.boundary_accuracy / n;
    r.f1_tol0 += e.f1_tol0 / n;
    r.f1_tol1 += e.f1_tol1 / n;
    has_recon = has_recon && e.reconstruction.has_value();
    has_online = has_online && e.online_reward.has_value();
    if (e.reconstruction) recon += *e.reconstruction / n;
    if (e.exact_match) exact += (*e.exact_match ? 1.0 : 0.0) / n;
    if (e.online_reward) online += *e.online_reward / n;
    const int t = static_cast<int>(e.truth.size()) + 1;
    if (tasks && *tasks != t) mixed = true;
    tasks = t;
  }
  r.num_tasks = mixed ? 0 : *tasks;
  if (has_recon) {
    r.reconstruction = recon;
    r.exact_match = exact;
  }
  if (has_online) r.online = online;
  r.episodes = std::move(episodes);
  return r;
}

MetricsReport compute_metrics(const CompILEModel& model, const std::vector<EpisodeRecord>& records, int segments,
                              const MetricsOptions& options) {
  const int m = segments > 0 ? segments : model.config().segments;
  std::vector<EpisodeMetrics> out;
  for (const auto& record : records) {
    const EpisodeTensors ep = prepare_episode(record);
    const Segmentation seg = segment_discrete(model, ep, m);
    EpisodeMetrics em = boundary_metrics(seg.boundaries, ep.boundaries);
    const auto matched = matched_steps(ep, reconstruct_actions(model, ep, seg));
    const auto hits = std::count(matched.begin(), matched.end(), true);
    em.reconstruction = static_cast<double>(hits) / static_cast<double>(matched.size());
    em.exact_match = hits == static_cast<long>(matched.size());
    if (options.online) {
      OnlineOptions oo;
      oo.max_steps = options.max_online_steps;
      oo.use_termination = m > 1;
      em.online_reward = execute_online(model, record, seg, oo).reward;
    }
    out.push_back(std::move(em));
  }
  return aggregate(model_name(model), m, std::move(out));
}

MetricsReport compute_surprisal_metrics(const SurprisalModel& model, const std::vector<EpisodeRecord>& records,
                                        int segments) {
  std::vector<EpisodeMetrics> out;
  for (const auto& record : records) {
    const EpisodeTensors ep = prepare_episode(record);
    out.push_back(boundary_metrics(surprisal_segment(model, ep, segments), ep.boundaries));
  }
  return aggregate("surprisal", segments, std::move(out));
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& reports) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "model,tasks,metric,value\n" << std::setprecision(10);
  for (const auto& r : reports) {
    auto row = [&](const char* metric, double v) {
      out << r.model << ',' << r.num_tasks << ',' << metric << ',' << v << '\n';
    };
    row("boundary_accuracy", r.boundary_accuracy);
    row("f1_tol0", r.f1_tol0);
    row("f1_tol1", r.f1_tol1);
    if (r.reconstruction) row("reconstruction", *r.reconstruction);
    if (r.exact_match) row("exact_match", *r.exact_match);
    if (r.online) row("online_reward", *r.online);
  }
}

nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["model"] = r.model;
  j["tasks"] = r.num_tasks;
  j["segments"] = r.segments;
  nlohmann::json m{{"boundary_accuracy", r.boundary_accuracy}, {"f1_tol0", r.f1_tol0}, {"f1_tol1", r.f1_tol1}};
  if (r.reconstruction) m["reconstruction"] = *r.reconstruction;
  if (r.exact_match) m["exact_match"] = *r.exact_match;
  if (r.online) m["online_reward"] = *r.online;
  j["metrics"] = m;
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : r.episodes) {
    nlohmann::json x{{"predicted", e.predicted},
                     {"truth", e.truth},
                     {"boundary_accuracy", e.boundary_accuracy},
                     {"f1_tol0", e.f1_tol0},
                     {"f1_tol1", e.f1_tol1}};
    if (e.reconstruction) x["reconstruction"] = *e.reconstruction;
    if (e.exact_match) x["exact_match"] = *e.exact_match;
    if (e.online_reward) x["online_reward"] = *e.online_reward;
    eps.push_back(std::move(x));
  }
  j["episodes"] = std::move(eps);
  return j;
}

}  // namespace compile
