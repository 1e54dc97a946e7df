#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "compile/evaluation.hpp"
#include "compile/model_io.hpp"

namespace py = pybind11;
using namespace compile;

namespace {

// Python objects <-> nlohmann::json through the json module.
nlohmann::json to_json(const py::handle& obj) {
  const auto dumps = py::module_::import("json").attr("dumps");
  return nlohmann::json::parse(py::cast<std::string>(dumps(obj)));
}

py::object from_json(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

CompILEConfig config_from(const py::dict& overrides) {
  nlohmann::json j = CompILEConfig{}.to_json();
  const nlohmann::json given = to_json(overrides);
  for (const auto& [k, v] : given.items()) {
    if (!j.contains(k)) throw std::invalid_argument("unknown config key '" + k + "'");
    j[k] = v;
  }
  CompILEConfig c = CompILEConfig::from_json(j);
  c.validate();
  return c;
}

class Dataset {
 public:
  explicit Dataset(std::vector<EpisodeRecord> records) : records_(std::move(records)) {
    for (const auto& r : records_) tensors_.push_back(prepare_episode(r));
  }
  static Dataset load(const std::string& path) { return Dataset(load_dataset(path)); }

  std::size_t size() const { return records_.size(); }
  const EpisodeRecord& record(int i) const { return records_.at(index(i)); }
  const EpisodeTensors& tensors(int i) const { return tensors_.at(index(i)); }
  const std::vector<EpisodeRecord>& records() const { return records_; }
  const std::vector<EpisodeTensors>& all_tensors() const { return tensors_; }

 private:
  std::size_t index(int i) const {
    const int n = static_cast<int>(records_.size());
    if (i < 0) i += n;
    if (i < 0 || i >= n) throw py::index_error("episode index out of range");
    return static_cast<std::size_t>(i);
  }
  std::vector<EpisodeRecord> records_;
  std::vector<EpisodeTensors> tensors_;
};

py::dict loss_row(const LossValues& v) {
  py::dict d;
  d["total"] = v.total;
  d["recon"] = v.recon;
  d["kl_z"] = v.kl_z;
  d["kl_b"] = v.kl_b;
  d["term_bce"] = v.term_bce;
  d["sup"] = v.sup;
  return d;
}

TrainOptions train_options(int iterations, int batch_size, double lr, std::uint64_t seed, const std::string& out) {
  TrainOptions o;
  o.iterations = iterations;
  o.batch_size = batch_size;
  o.learning_rate = lr;
  o.seed = seed;
  if (!out.empty()) {
    o.checkpoint_path = out;
    o.loss_csv = out + ".loss.csv";
  }
  return o;
}

class Model {
 public:
  explicit Model(LoadedModel m) : m_(std::move(m)) {}
  static Model load(const std::string& path) { return Model(load_model(path)); }

  const std::string& kind() const { return m_.kind; }
  py::object header() const { return from_json(m_.header); }

  py::object segment(const Dataset& data, int i, int segments) const {
    const auto& ep = data.tensors(i);
    require_same_env(m_.env, ep.env);
    if (segments <= 0) segments = static_cast<int>(data.record(i).tasks.size());
    if (m_.surprisal) {
      const auto b = surprisal_segment(*m_.surprisal, ep, segments);
      return from_json({{"boundaries", b}, {"segment_ids", segment_ids(b, ep.length())}});
    }
    return from_json(segmentation_report(segment_discrete(*m_.compile, ep, m_.kind == "vae-bc" ? 1 : segments), &ep));
  }

  py::object evaluate(const Dataset& data, int segments, bool online) const {
    if (data.size() == 0) throw std::invalid_argument("dataset is empty");
    require_same_env(m_.env, data.record(0).spec());
    if (m_.surprisal) {
      if (segments <= 0) segments = static_cast<int>(data.record(0).tasks.size());
      return from_json(report_to_json(compute_surprisal_metrics(*m_.surprisal, data.records(), segments)));
    }
    MetricsOptions mo;
    mo.online = online;
    return from_json(report_to_json(compute_metrics(*m_.compile, data.records(), m_.kind == "vae-bc" ? 1 : segments, mo)));
  }

  int rollout(const Dataset& data, int i) const {
    if (!m_.compile) throw std::invalid_argument("rollout needs a compile or vae-bc model");
    require_same_env(m_.env, data.record(i).spec());
    const auto& r = data.record(i);
    return (m_.kind == "vae-bc" ? vae_bc_execute(*m_.compile, r) : execute_online(*m_.compile, r)).reward;
  }

 private:
  LoadedModel m_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "CompILE segmentation and imitation toolkit (C++ core)";

  m.def(
      "generate_dataset",
      [](const std::string& path, const std::string& env, int episodes, int tasks, const std::string& kind,
         std::uint64_t seed, int cap, int grid_size, int num_types, int num_objects) {
        GenerationOptions o;
        o.env = parse_env_kind(env);
        o.episodes = episodes;
        o.num_tasks = tasks;
        o.kind = kind.empty() ? (o.env == EnvKind::Grid ? TaskKind::Pickup : TaskKind::Reach) : parse_task_kind(kind);
        o.master_seed = seed;
        o.cap = cap;
        o.grid.size = grid_size;
        o.grid.num_types = num_types;
        o.grid.num_objects = num_objects;
        py::gil_scoped_release release;
        write_dataset(o, path);
      },
      py::arg("path"), py::arg("env") = "grid", py::arg("episodes") = 8, py::arg("tasks") = 3, py::arg("kind") = "",
      py::arg("seed") = 0, py::arg("cap") = 200, py::arg("grid_size") = 10, py::arg("num_types") = 10,
      py::arg("num_objects") = 6, "Write a JSON Lines dataset of scripted demonstrations.");

  py::class_<Dataset>(m, "Dataset")
      .def_static("load", &Dataset::load, py::arg("path"))
      .def("__len__", &Dataset::size)
      .def("observations", [](const Dataset& d, int i) { return d.tensors(i).observations; })
      .def("actions", [](const Dataset& d, int i) { return d.tensors(i).actions; })
      .def("boundaries", [](const Dataset& d, int i) { return d.tensors(i).boundaries; })
      .def("task_types", [](const Dataset& d, int i) { return d.tensors(i).task_types; })
      .def("length", [](const Dataset& d, int i) { return d.tensors(i).length(); })
      .def("replay_ok", [](const Dataset& d, int i) { return replay_validate(d.record(i)).ok; })
      .def("env", [](const Dataset& d) { return d.size() ? describe(d.record(0).spec()) : std::string(); });

  m.def(
      "train_compile",
      [](const Dataset& data, const py::dict& config, int iterations, int batch_size, double lr, std::uint64_t seed,
         const std::string& out, const std::string& model) {
        if (data.size() == 0) throw std::invalid_argument("dataset is empty");
        CompILEConfig cfg = config_from(config);
        if (model == "vae-bc") cfg = vae_bc_config(cfg, cfg.latent_dim);
        else if (model != "compile") throw std::invalid_argument("model must be 'compile' or 'vae-bc'");
        const EnvSpec env = data.record(0).spec();
        CompILEModel net(cfg, env, seed);
        TrainOptions o = train_options(iterations, batch_size, lr, seed, out);
        o.checkpoint_header = model_header(model, cfg, env);
        std::vector<LossValues> curve;
        {
          py::gil_scoped_release release;
          curve = train(net, data.all_tensors(), o);
        }
        py::list rows;
        for (const auto& v : curve) rows.append(loss_row(v));
        return rows;
      },
      py::arg("data"), py::arg("config") = py::dict(), py::arg("iterations") = 100, py::arg("batch_size") = 32,
      py::arg("lr") = 1e-3, py::arg("seed") = 0, py::arg("out") = "", py::arg("model") = "compile",
      "Train CompILE (or VAE-BC); returns the loss curve and writes a checkpoint when out is given.");

  m.def(
      "train_surprisal",
      [](const Dataset& data, int hidden, int conv_channels, int iterations, int batch_size, double lr,
         std::uint64_t seed, const std::string& out) {
        if (data.size() == 0) throw std::invalid_argument("dataset is empty");
        SurprisalConfig cfg{hidden, conv_channels};
        SurprisalModel net(cfg, data.record(0).spec(), seed);
        std::vector<LossValues> curve;
        {
          py::gil_scoped_release release;
          curve = surprisal_train(net, data.all_tensors(), train_options(iterations, batch_size, lr, seed, out));
        }
        std::vector<double> totals;
        for (const auto& v : curve) totals.push_back(v.total);
        return totals;
      },
      py::arg("data"), py::arg("hidden") = 256, py::arg("conv_channels") = 64, py::arg("iterations") = 100,
      py::arg("batch_size") = 32, py::arg("lr") = 1e-3, py::arg("seed") = 0, py::arg("out") = "");

  py::class_<Model>(m, "Model")
      .def_static("load", &Model::load, py::arg("path"))
      .def_property_readonly("kind", &Model::kind)
      .def_property_readonly("header", &Model::header)
      .def("segment", &Model::segment, py::arg("data"), py::arg("index"), py::arg("segments") = 0)
      .def("evaluate", &Model::evaluate, py::arg("data"), py::arg("segments") = 0, py::arg("online") = true)
      .def("rollout", &Model::rollout, py::arg("data"), py::arg("index"));

  m.def(
      "segment_probs_and_masks",
      [](const Matrix& y) {
        const auto s = segment_probs_and_masks(y);
        return py::make_tuple(s.segprobs, s.masks);
      },
      py::arg("y"), "Rows of y are boundary distributions over positions; returns (segprobs, masks).");
  m.def("truncated_poisson", &truncated_poisson, py::arg("rate"), py::arg("support"));
  m.def("f1_score", &f1_score, py::arg("predicted"), py::arg("truth"), py::arg("tol") = 0);
  m.def("boundary_accuracy", &boundary_accuracy, py::arg("predicted"), py::arg("truth"));
  m.def("surprisal_boundaries", &surprisal_boundaries, py::arg("likelihoods"), py::arg("segments"));
}
