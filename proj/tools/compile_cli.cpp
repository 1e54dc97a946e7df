// compile: data generation, training, evaluation, segmentation, rollout and plots.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "compile/baselines.hpp"
#include "compile/evaluation.hpp"
#include "compile/log.hpp"
#include "compile/model_io.hpp"
#include "compile/plot.hpp"

namespace fs = std::filesystem;
using namespace compile;

namespace {

struct GenArgs {
  std::string env = "grid";
  int episodes = 0;
  int tasks = 3;
  std::string kind;
  std::uint64_t seed = 0;
  int cap = 200;
  std::string out;
  int grid_size = 10;
  int num_types = grid::kNumObjectTypes;
  int num_objects = 6;
};

struct TrainArgs {
  std::string data;
  std::string model = "compile";
  int segments = 3;
  int latents = 10;
  int latent_dim = 32;
  std::string latent_kind = "categorical";
  double beta = 0.1;
  double lambda = 3.0;
  double temp = 1.0;
  double final_temp = 0;
  std::string supervision = "none";
  std::string readout = "last-step";
  int iters = 1000;
  double lr = 1e-4;
  int batch = 256;
  std::uint64_t seed = 0;
  std::string out;
  int hidden = 256;
  int conv_channels = 64;
  double term_weight = 1.0;
  int checkpoint_every = 0;
};

struct EvalArgs {
  std::string ckpt;
  std::string data;
  int segments = 0;
  std::string out;
  bool no_online = false;
};

struct SegmentArgs {
  std::string ckpt;
  std::string data;
  int episode = 0;
  int segments = 0;
};

struct RolloutArgs {
  std::string ckpt;
  std::string data;
  int episodes = 0;
};

struct PlotArgs {
  std::string report;
  std::string out;
};

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("file not found: " + path);
}

std::vector<EpisodeRecord> load_nonempty(const std::string& path) {
  require_file(path);
  auto records = load_dataset(path);
  if (records.empty()) throw std::runtime_error(path + " contains no episodes");
  return records;
}

std::string loss_csv_path(const std::string& ckpt) { return ckpt + ".loss.csv"; }

int run_gen(const GenArgs& a) {
  GenerationOptions o;
  o.env = parse_env_kind(a.env);
  o.episodes = a.episodes;
  o.num_tasks = a.tasks;
  o.kind = a.kind.empty() ? (o.env == EnvKind::Grid ? TaskKind::Pickup : TaskKind::Reach) : parse_task_kind(a.kind);
  o.master_seed = a.seed;
  o.cap = a.cap;
  o.grid.size = a.grid_size;
  o.grid.num_types = a.num_types;
  o.grid.num_objects = a.num_objects;
  if (o.episodes < 1) throw std::invalid_argument("--episodes must be >= 1");
  write_dataset(o, a.out);
  std::cout << a.out << '\n';
  return 0;
}

int run_train(const TrainArgs& a) {
  const auto records = load_nonempty(a.data);
  const EnvSpec env = records.front().spec();
  std::vector<EpisodeTensors> data;
  data.reserve(records.size());
  for (const auto& r : records) data.push_back(prepare_episode(r));

  TrainOptions o;
  o.iterations = a.iters;
  o.batch_size = a.batch;
  o.learning_rate = a.lr;
  o.seed = a.seed;
  o.final_temperature = a.final_temp;
  o.checkpoint_every = a.checkpoint_every;
  o.checkpoint_path = a.out;
  o.loss_csv = loss_csv_path(a.out);
  if (a.iters < 1) throw std::invalid_argument("--iters must be >= 1");
  auto progress = [&](int it, const LossValues& v) {
    if (it % 100 == 0 || it == a.iters)
      log_info("iteration " + std::to_string(it) + " loss " + std::to_string(v.total));
  };
  o.on_iteration = progress;

  auto with_data = [&](std::string header) {
    auto j = nlohmann::json::parse(header);
    j["data"] = fs::absolute(a.data).string();
    return j.dump();
  };

  if (a.model == "surprisal") {
    SurprisalConfig cfg{a.hidden, a.conv_channels};
    SurprisalModel model(cfg, env, a.seed);
    o.checkpoint_header = with_data(surprisal_header(cfg, env));
    surprisal_train(model, data, o);
  } else if (a.model == "compile" || a.model == "vae-bc") {
    CompILEConfig cfg;
    cfg.segments = a.segments;
    cfg.latents = a.latents;
    cfg.latent_dim = a.latent_dim;
    cfg.latent_kind = parse_latent_kind(a.latent_kind);
    cfg.temperature = a.temp;
    cfg.poisson_rate = a.lambda;
    cfg.beta = a.beta;
    cfg.hidden = a.hidden;
    cfg.conv_channels = a.conv_channels;
    cfg.readout = parse_readout(a.readout);
    cfg.supervision = parse_supervision(a.supervision);
    cfg.termination_weight = a.term_weight;
    if (a.model == "vae-bc") cfg = vae_bc_config(cfg, a.latent_dim);
    cfg.validate();
    CompILEModel model(cfg, env, a.seed);
    o.checkpoint_header = with_data(model_header(a.model, cfg, env));
    train(model, data, o);
  } else {
    throw std::invalid_argument("unknown model '" + a.model + "'");
  }
  std::cout << a.out << '\n' << o.loss_csv.string() << '\n';
  return 0;
}

int run_eval(const EvalArgs& a) {
  require_file(a.ckpt);
  const LoadedModel m = load_model(a.ckpt);
  const auto records = load_nonempty(a.data);
  require_same_env(m.env, records.front().spec());

  MetricsReport report;
  if (m.surprisal) {
    const int segments = a.segments > 0 ? a.segments : static_cast<int>(records.front().tasks.size());
    report = compute_surprisal_metrics(*m.surprisal, records, segments);
  } else {
    MetricsOptions mo;
    mo.online = !a.no_online;
    const int segments = m.kind == "vae-bc" ? 1 : a.segments;
    report = compute_metrics(*m.compile, records, segments, mo);
  }
  nlohmann::json j = report_to_json(report);
  j["checkpoint"] = fs::absolute(a.ckpt).string();
  j["data"] = fs::absolute(a.data).string();
  if (fs::exists(loss_csv_path(a.ckpt))) j["loss_csv"] = fs::absolute(loss_csv_path(a.ckpt)).string();
  {
    std::ofstream out(a.out);
    if (!out) throw std::runtime_error("cannot open " + a.out + " for writing");
    out << j.dump(2) << '\n';
  }
  const fs::path csv = fs::path(a.out).replace_extension(".csv");
  write_metrics_csv(csv, {report});
  std::cout << a.out << '\n' << csv.string() << '\n';
  return 0;
}

int run_segment(const SegmentArgs& a) {
  require_file(a.ckpt);
  const LoadedModel m = load_model(a.ckpt);
  std::string data = a.data;
  if (data.empty()) {
    if (!m.header.contains("data")) throw std::invalid_argument("checkpoint names no dataset; pass --data");
    data = m.header["data"].get<std::string>();
  }
  const auto records = load_nonempty(data);
  require_same_env(m.env, records.front().spec());
  if (a.episode < 0 || a.episode >= static_cast<int>(records.size()))
    throw std::invalid_argument("--episode " + std::to_string(a.episode) + " out of range [0, " +
                                std::to_string(records.size()) + ")");
  const EpisodeRecord& record = records[static_cast<std::size_t>(a.episode)];
  const EpisodeTensors ep = prepare_episode(record);
  const int segments = a.segments > 0 ? a.segments : static_cast<int>(record.tasks.size());
  nlohmann::json j;
  if (m.surprisal) {
    const auto b = surprisal_segment(*m.surprisal, ep, segments);
    j["boundaries"] = b;
    j["segment_ids"] = segment_ids(b, ep.length());
    j["true_boundaries"] = ep.boundaries;
  } else {
    j = segmentation_report(segment_discrete(*m.compile, ep, m.kind == "vae-bc" ? 1 : segments), &ep);
  }
  j["episode"] = a.episode;
  std::cout << j.dump() << '\n';
  return 0;
}

int run_rollout(const RolloutArgs& a) {
  require_file(a.ckpt);
  const LoadedModel m = load_model(a.ckpt);
  if (!m.compile) throw std::invalid_argument("rollout needs a compile or vae-bc checkpoint");
  const auto records = load_nonempty(a.data);
  require_same_env(m.env, records.front().spec());
  const int n = a.episodes > 0 ? std::min<int>(a.episodes, static_cast<int>(records.size()))
                               : static_cast<int>(records.size());
  double total = 0;
  for (int i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    const OnlineResult res = m.kind == "vae-bc" ? vae_bc_execute(*m.compile, r) : execute_online(*m.compile, r);
    total += res.reward;
    std::cout << nlohmann::json{{"episode", i},
                                {"reward", res.reward},
                                {"steps", res.steps},
                                {"switches", res.switches},
                                {"tasks_completed", res.tasks_completed}}
                     .dump()
              << '\n';
  }
  std::cout << nlohmann::json{{"episodes", n}, {"mean_reward", total / n}}.dump() << '\n';
  return 0;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

int run_plot(const PlotArgs& a) {
  require_file(a.report);
  nlohmann::json j;
  try {
    std::ifstream in(a.report);
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(a.report + ": not a JSON report: " + e.what());
  }
  fs::create_directories(a.out);
  std::vector<fs::path> written;

  std::vector<plot::Bar> bars, rewards;
  const fs::path metrics_csv = fs::path(a.out) / "metrics.csv";
  {
    std::ofstream out(metrics_csv);
    out << "model,tasks,metric,value\n" << std::setprecision(10);
    for (const auto& [name, value] : j.at("metrics").items()) {
      out << j.at("model").get<std::string>() << ',' << j.at("tasks").get<int>() << ',' << name << ','
          << value.get<double>() << '\n';
      (name == "online_reward" ? rewards : bars).push_back({name, value.get<double>()});
    }
  }
  written.push_back(metrics_csv);
  const std::string title = j.at("model").get<std::string>() + ", " + std::to_string(j.at("tasks").get<int>()) + " tasks";
  plot::bar_chart_svg(fs::path(a.out) / "metrics.svg", title, bars, 1.0);
  written.push_back(fs::path(a.out) / "metrics.svg");
  if (!rewards.empty()) {
    plot::bar_chart_svg(fs::path(a.out) / "online_reward.svg", title, rewards, 100.0);
    written.push_back(fs::path(a.out) / "online_reward.svg");
  }

  if (j.contains("loss_csv") && fs::exists(j["loss_csv"].get<std::string>())) {
    const fs::path src = j["loss_csv"].get<std::string>();
    const auto rows = read_csv(src);
    std::vector<plot::Series> series;
    if (!rows.empty())
      for (std::size_t c = 1; c < rows.front().size(); ++c) series.push_back({rows.front()[c], {}});
    for (std::size_t r = 1; r < rows.size(); ++r)
      for (std::size_t c = 1; c < rows[r].size() && c - 1 < series.size(); ++c)
        series[c - 1].values.push_back(std::stod(rows[r][c]));
    plot::line_chart_svg(fs::path(a.out) / "loss.svg", "training loss", series);
    fs::copy_file(src, fs::path(a.out) / "loss.csv", fs::copy_options::overwrite_existing);
    written.push_back(fs::path(a.out) / "loss.svg");
    written.push_back(fs::path(a.out) / "loss.csv");
  } else {
    log_info("report names no loss curve; skipping loss plot");
  }
  for (const auto& p : written) std::cout << p.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CompILE segmentation and imitation toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "generate demonstrations as JSON Lines");
  g->add_option("--env", gen.env)->check(CLI::IsMember({"grid", "reacher"}));
  g->add_option("--episodes", gen.episodes)->required();
  g->add_option("--tasks", gen.tasks);
  g->add_option("--kind", gen.kind)->check(CLI::IsMember({"visit", "pickup", "reach"}));
  g->add_option("--seed", gen.seed);
  g->add_option("--cap", gen.cap);
  g->add_option("--out", gen.out)->required();
  g->add_option("--grid-size", gen.grid_size);
  g->add_option("--num-types", gen.num_types);
  g->add_option("--num-objects", gen.num_objects);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a model and write a checkpoint plus loss CSV");
  t->add_option("--data", tr.data)->required();
  t->add_option("--model", tr.model)->check(CLI::IsMember({"compile", "surprisal", "vae-bc"}));
  t->add_option("--segments", tr.segments);
  t->add_option("--latents", tr.latents);
  t->add_option("--latent-dim", tr.latent_dim);
  t->add_option("--latent-kind", tr.latent_kind)->check(CLI::IsMember({"categorical", "gaussian"}));
  t->add_option("--beta", tr.beta);
  t->add_option("--lambda", tr.lambda);
  t->add_option("--temp", tr.temp);
  t->add_option("--final-temp", tr.final_temp, "anneal the temperature linearly to this value");
  t->add_option("--supervision", tr.supervision)->check(CLI::IsMember({"none", "z", "b"}));
  t->add_option("--readout", tr.readout)->check(CLI::IsMember({"last-step", "attentive"}));
  t->add_option("--iters", tr.iters);
  t->add_option("--lr", tr.lr);
  t->add_option("--batch", tr.batch);
  t->add_option("--seed", tr.seed);
  t->add_option("--out", tr.out)->required();
  t->add_option("--hidden", tr.hidden);
  t->add_option("--conv-channels", tr.conv_channels);
  t->add_option("--term-weight", tr.term_weight);
  t->add_option("--checkpoint-every", tr.checkpoint_every);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "compute metrics; writes a JSON report and a CSV next to it");
  e->add_option("--ckpt", ev.ckpt)->required();
  e->add_option("--data", ev.data)->required();
  e->add_option("--segments", ev.segments);
  e->add_option("--out", ev.out)->required();
  e->add_flag("--no-online", ev.no_online, "skip online execution");

  SegmentArgs sg;
  auto* s = app.add_subcommand("segment", "print the segmentation of one episode as JSON");
  s->add_option("--ckpt", sg.ckpt)->required();
  s->add_option("--episode", sg.episode)->required();
  s->add_option("--data", sg.data, "defaults to the checkpoint's training data");
  s->add_option("--segments", sg.segments, "defaults to the episode's task count");

  RolloutArgs ro;
  auto* r = app.add_subcommand("rollout", "execute inferred sub-policies online");
  r->add_option("--ckpt", ro.ckpt)->required();
  r->add_option("--data", ro.data)->required();
  r->add_option("--episodes", ro.episodes);

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "write SVG charts and CSVs for a report");
  p->add_option("--report", pl.report)->required();
  p->add_option("--out", pl.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 2;
  }

  try {
    if (g->parsed()) return run_gen(gen);
    if (t->parsed()) return run_train(tr);
    if (e->parsed()) return run_eval(ev);
    if (s->parsed()) return run_segment(sg);
    if (r->parsed()) return run_rollout(ro);
    if (p->parsed()) return run_plot(pl);
  } catch (const DatasetError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 1;
}
