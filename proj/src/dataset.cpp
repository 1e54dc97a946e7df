#include "compile/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace compile {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

namespace {

double round_digest(double v) { return std::round(v * 1e9) / 1e9; }

std::string task_kind_name(TaskKind k) { return std::string(to_string(k)); }

}  // namespace

int EpisodeRecord::length() const {
  return env == EnvKind::Grid ? static_cast<int>(grid_actions.size()) : static_cast<int>(reacher_actions.size());
}

EnvSpec EpisodeRecord::spec() const {
  EnvSpec s;
  s.kind = env;
  if (env == EnvKind::Grid) s.grid_size = layout.size();
  return s;
}

DatasetError::DatasetError(int line, std::string field, const std::string& message)
    : std::runtime_error((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
                         (field.empty() ? message : field + ": " + message)),
      line_(line),
      field_(std::move(field)) {}

EpisodeRecord generate_record(const GenerationOptions& o, std::uint64_t seed) {
  EpisodeRecord r;
  r.env = o.env;
  r.seed = seed;
  if (o.env == EnvKind::Grid) {
    const auto ep = grid::generate_episode(seed, o.num_tasks, o.kind, o.cap, o.grid);
    r.layout = ep.initial.layout;
    r.tasks = ep.initial.tasks;
    r.boundaries = ep.demo.boundaries;
    grid::GridEnvState s = ep.initial;
    for (auto a : ep.demo.actions) {
      r.grid_actions.push_back(static_cast<int>(a));
      grid::apply(s, a);
    }
    r.digest_agent = s.agent;
    for (std::size_t i = 0; i < s.removed.size(); ++i)
      if (s.removed[i]) r.digest_removed.push_back(s.layout.objects[i].type);
    std::sort(r.digest_removed.begin(), r.digest_removed.end());
  } else {
    if (o.kind != TaskKind::Reach) throw std::invalid_argument("reacher episodes use kind 'reach'");
    const auto ep = reacher::generate_episode(seed, o.num_tasks);
    r.targets = ep.initial.targets;
    r.theta_start = {ep.initial.theta1, ep.initial.theta2};
    r.tasks = ep.initial.tasks;
    r.boundaries = ep.demo.boundaries;
    r.reacher_actions = ep.demo.actions;
    reacher::ReacherState s = ep.initial;
    for (const auto& a : ep.demo.actions) reacher::apply(s, a);
    r.digest_theta = {round_digest(s.theta1), round_digest(s.theta2)};
  }
  return r;
}

std::vector<EpisodeRecord> generate_records(const GenerationOptions& o) {
  if (o.episodes < 0) throw std::invalid_argument("episodes must be non-negative");
  std::vector<EpisodeRecord> out;
  out.reserve(static_cast<std::size_t>(o.episodes));
  for (int i = 0; i < o.episodes; ++i) out.push_back(generate_record(o, o.master_seed + static_cast<std::uint64_t>(i)));
  return out;
}

std::string to_json_line(const EpisodeRecord& r) {
  ojson j;
  j["env"] = std::string(to_string(r.env));
  j["seed"] = r.seed;
  ojson tasks = ojson::array();
  for (const auto& t : r.tasks) tasks.push_back({{"kind", task_kind_name(t.kind)}, {"type", t.object_type}});
  if (r.env == EnvKind::Grid) {
    ojson walls = ojson::array();
    for (const auto& c : r.layout.walls()) walls.push_back({c.row, c.col});
    j["walls"] = walls;
    ojson objects = ojson::array();
    for (const auto& o : r.layout.objects) objects.push_back({{"type", o.type}, {"pos", {o.pos.row, o.pos.col}}});
    j["objects"] = objects;
    j["agent_start"] = {r.layout.agent_start.row, r.layout.agent_start.col};
    j["tasks"] = tasks;
    j["actions"] = r.grid_actions;
    j["boundaries"] = r.boundaries;
    j["digest"] = {{"agent", {r.digest_agent.row, r.digest_agent.col}}, {"removed", r.digest_removed}};
  } else {
    ojson targets = ojson::array();
    for (const auto& t : r.targets) targets.push_back({{"type", t.type}, {"pos", {t.x, t.y}}});
    j["targets"] = targets;
    j["theta_start"] = {r.theta_start[0], r.theta_start[1]};
    j["tasks"] = tasks;
    ojson actions = ojson::array();
    for (const auto& a : r.reacher_actions) actions.push_back({a[0], a[1]});
    j["actions"] = actions;
    j["boundaries"] = r.boundaries;
    j["digest"] = {{"theta", {r.digest_theta[0], r.digest_theta[1]}}};
  }
  return j.dump();
}

namespace {

struct Reader {
  const json& root;
  int line;

  [[noreturn]] void fail(const std::string& field, const std::string& msg) const { throw DatasetError(line, field, msg); }

  const json& at(const json& obj, const std::string& key, const std::string& path) const {
    if (!obj.is_object() || !obj.contains(key)) fail(path, "missing");
    return obj.at(key);
  }
  int integer(const json& v, const std::string& path) const {
    if (!v.is_number_integer()) fail(path, "expected integer");
    return v.get<int>();
  }
  double number(const json& v, const std::string& path) const {
    if (!v.is_number()) fail(path, "expected number");
    return v.get<double>();
  }
  const json& array(const json& v, const std::string& path, std::size_t size = 0) const {
    if (!v.is_array()) fail(path, "expected array");
    if (size && v.size() != size) fail(path, "expected " + std::to_string(size) + " entries");
    return v;
  }
  grid::Cell cell(const json& v, const std::string& path) const {
    array(v, path, 2);
    return {integer(v[0], path), integer(v[1], path)};
  }
};

}  // namespace

EpisodeRecord parse_json_line(const std::string& line, int line_number) {
  json root;
  try {
    root = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DatasetError(line_number, "", std::string("parse error: ") + e.what());
  }
  Reader rd{root, line_number};
  if (!root.is_object()) rd.fail("", "expected a JSON object");

  EpisodeRecord r;
  const json& env = rd.at(root, "env", "env");
  if (!env.is_string()) rd.fail("env", "expected string");
  try {
    r.env = parse_env_kind(env.get<std::string>());
  } catch (const std::invalid_argument&) {
    rd.fail("env", "unknown env tag '" + env.get<std::string>() + "'");
  }
  const json& seed = rd.at(root, "seed", "seed");
  if (!seed.is_number_unsigned() && !seed.is_number_integer()) rd.fail("seed", "expected integer");
  r.seed = seed.get<std::uint64_t>();

  for (const auto& t : rd.array(rd.at(root, "tasks", "tasks"), "tasks")) {
    TaskSpec spec;
    const json& kind = rd.at(t, "kind", "tasks.kind");
    if (!kind.is_string()) rd.fail("tasks.kind", "expected string");
    try {
      spec.kind = parse_task_kind(kind.get<std::string>());
    } catch (const std::invalid_argument&) {
      rd.fail("tasks.kind", "unknown task kind");
    }
    spec.object_type = rd.integer(rd.at(t, "type", "tasks.type"), "tasks.type");
    if (spec.object_type < 0 || spec.object_type >= grid::kNumObjectTypes) rd.fail("tasks.type", "out of range");
    if ((r.env == EnvKind::Reacher) != (spec.kind == TaskKind::Reach)) rd.fail("tasks.kind", "kind does not match env");
    r.tasks.push_back(spec);
  }

  const json& actions = rd.array(rd.at(root, "actions", "actions"), "actions");
  if (r.env == EnvKind::Grid) {
    std::vector<grid::Cell> walls;
    int size = 0;
    for (const auto& w : rd.array(rd.at(root, "walls", "walls"), "walls")) {
      walls.push_back(rd.cell(w, "walls"));
      size = std::max({size, walls.back().row + 1, walls.back().col + 1});
    }
    if (size < 3) rd.fail("walls", "border walls missing");
    r.layout = grid::GridLayout(size);
    for (const auto& c : walls) {
      if (c.row < 0 || c.col < 0) rd.fail("walls", "negative coordinate");
      r.layout.set_wall(c, true);
    }
    for (int i = 0; i < size; ++i)
      if (!r.layout.is_wall({0, i}) || !r.layout.is_wall({size - 1, i}) || !r.layout.is_wall({i, 0}) ||
          !r.layout.is_wall({i, size - 1}))
        rd.fail("walls", "border must be walled");
    for (const auto& o : rd.array(rd.at(root, "objects", "objects"), "objects")) {
      grid::GridObject obj;
      obj.type = rd.integer(rd.at(o, "type", "objects.type"), "objects.type");
      if (obj.type < 0 || obj.type >= grid::kNumObjectTypes) rd.fail("objects.type", "out of range");
      obj.pos = rd.cell(rd.at(o, "pos", "objects.pos"), "objects.pos");
      if (!r.layout.in_bounds(obj.pos) || r.layout.is_wall(obj.pos)) rd.fail("objects.pos", "object on wall");
      r.layout.objects.push_back(obj);
    }
    r.layout.agent_start = rd.cell(rd.at(root, "agent_start", "agent_start"), "agent_start");
    if (!r.layout.in_bounds(r.layout.agent_start) || r.layout.is_wall(r.layout.agent_start))
      rd.fail("agent_start", "agent on wall");
    for (const auto& a : actions) {
      const int id = rd.integer(a, "actions");
      if (id < 0 || id >= grid::kNumActions) rd.fail("actions", "action id out of range");
      r.grid_actions.push_back(id);
    }
    const json& digest = rd.at(root, "digest", "digest");
    r.digest_agent = rd.cell(rd.at(digest, "agent", "digest.agent"), "digest.agent");
    for (const auto& v : rd.array(rd.at(digest, "removed", "digest.removed"), "digest.removed"))
      r.digest_removed.push_back(rd.integer(v, "digest.removed"));
  } else {
    for (const auto& t : rd.array(rd.at(root, "targets", "targets"), "targets")) {
      reacher::Target target;
      target.type = rd.integer(rd.at(t, "type", "targets.type"), "targets.type");
      if (target.type < 0 || target.type >= reacher::kNumTargetTypes) rd.fail("targets.type", "out of range");
      const json& pos = rd.array(rd.at(t, "pos", "targets.pos"), "targets.pos", 2);
      target.x = rd.number(pos[0], "targets.pos");
      target.y = rd.number(pos[1], "targets.pos");
      r.targets.push_back(target);
    }
    const json& theta = rd.array(rd.at(root, "theta_start", "theta_start"), "theta_start", 2);
    r.theta_start = {rd.number(theta[0], "theta_start"), rd.number(theta[1], "theta_start")};
    for (const auto& a : actions) {
      rd.array(a, "actions", 2);
      r.reacher_actions.push_back({rd.number(a[0], "actions"), rd.number(a[1], "actions")});
    }
    const json& digest = rd.at(root, "digest", "digest");
    const json& dt = rd.array(rd.at(digest, "theta", "digest.theta"), "digest.theta", 2);
    r.digest_theta = {rd.number(dt[0], "digest.theta"), rd.number(dt[1], "digest.theta")};
  }

  const int steps = r.length();
  int prev = 1;
  for (const auto& b : rd.array(rd.at(root, "boundaries", "boundaries"), "boundaries")) {
    const int v = rd.integer(b, "boundaries");
    if (v <= prev || v > steps + 1) rd.fail("boundaries", "must be strictly increasing within [2, T+1]");
    r.boundaries.push_back(v);
    prev = v;
  }
  return r;
}

void write_dataset(const std::vector<EpisodeRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& r : records) out << to_json_line(r) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_dataset(const GenerationOptions& options, const std::filesystem::path& path) {
  write_dataset(generate_records(options), path);
}

std::vector<EpisodeRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<EpisodeRecord> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_json_line(line, number));
    if (!out.empty() && out.front().env != out.back().env) throw DatasetError(number, "env", "mixed environments");
  }
  return out;
}

grid::GridEnvState initial_grid_state(const EpisodeRecord& r) {
  grid::GridEnvState s = grid::make_state(r.layout, r.tasks);
  return s;
}

reacher::ReacherState initial_reacher_state(const EpisodeRecord& r) {
  return reacher::make_state(r.theta_start[0], r.theta_start[1], r.targets, r.tasks);
}

namespace {

ReplayResult failure(int step, std::string msg) { return {false, step, std::move(msg)}; }

ReplayResult check_boundaries(const std::vector<int>& events, const std::vector<int>& stored) {
  for (std::size_t i = 0; i < std::max(events.size(), stored.size()); ++i) {
    if (i >= events.size() || i >= stored.size() || events[i] != stored[i]) {
      const int at = i < stored.size() ? stored[i] : events[i];
      return failure(at, "boundary mismatch at boundary " + std::to_string(i + 1) + ": stored " +
                             (i < stored.size() ? std::to_string(stored[i]) : "none") + ", replay " +
                             (i < events.size() ? std::to_string(events[i]) : "none"));
    }
  }
  return {};
}

}  // namespace

ReplayResult replay_validate(const EpisodeRecord& r) {
  std::vector<int> events;
  if (r.env == EnvKind::Grid) {
    grid::GridEnvState s = initial_grid_state(r);
    for (std::size_t t = 0; t < r.grid_actions.size(); ++t) {
      const int step = static_cast<int>(t) + 1;
      const auto action = static_cast<grid::Action>(r.grid_actions[t]);
      const auto expected = grid::demo_action(s);
      if (!expected) return failure(step, "action after the episode finished or on an unsolvable leg");
      if (*expected != action)
        return failure(step, "action mismatch at step " + std::to_string(step) + ": stored " +
                                 std::to_string(r.grid_actions[t]) + ", demonstrator " +
                                 std::to_string(static_cast<int>(*expected)));
      const int before = s.task_index;
      const auto ev = grid::apply(s, action);
      if (ev.kind == grid::GridEvent::Kind::Picked && s.task_index == before)
        return failure(step, "wrong pickup at step " + std::to_string(step));
      if (s.task_index != before && !s.done()) events.push_back(step + 1);
    }
    if (!s.done()) return failure(r.length(), "tasks unfinished after replay");
    if (auto b = check_boundaries(events, r.boundaries); !b.ok) return b;
    std::vector<int> removed;
    for (std::size_t i = 0; i < s.removed.size(); ++i)
      if (s.removed[i]) removed.push_back(s.layout.objects[i].type);
    std::sort(removed.begin(), removed.end());
    if (!(s.agent == r.digest_agent) || removed != r.digest_removed)
      return failure(r.length(), "digest mismatch");
  } else {
    reacher::ReacherState s = initial_reacher_state(r);
    for (std::size_t t = 0; t < r.reacher_actions.size(); ++t) {
      const int step = static_cast<int>(t) + 1;
      if (s.done()) return failure(step, "action after the episode finished");
      const auto expected = reacher::scripted_action(s);
      const auto& a = r.reacher_actions[t];
      if (std::abs(expected[0] - a[0]) > 1e-9 || std::abs(expected[1] - a[1]) > 1e-9)
        return failure(step, "action mismatch at step " + std::to_string(step));
      const int before = s.task_index;
      reacher::apply(s, a);
      if (s.task_index != before && !s.done()) events.push_back(step + 1);
    }
    if (!s.done()) return failure(r.length(), "tasks unfinished after replay");
    if (auto b = check_boundaries(events, r.boundaries); !b.ok) return b;
    if (round_digest(s.theta1) != r.digest_theta[0] || round_digest(s.theta2) != r.digest_theta[1])
      return failure(r.length(), "digest mismatch");
  }
  return {};
}

EpisodeTensors prepare_episode(const EpisodeRecord& r) {
  EpisodeTensors e;
  e.env = r.spec();
  const int steps = r.length();
  e.observations = Matrix::Zero(steps, e.env.observation_size());
  e.actions = Matrix::Zero(steps, e.env.action_size());
  e.boundaries = r.boundaries;
  for (const auto& t : r.tasks) e.task_types.push_back(t.object_type);
  if (r.env == EnvKind::Grid) {
    grid::GridEnvState s = initial_grid_state(r);
    for (int t = 0; t < steps; ++t) {
      const auto obs = grid::observe(s);
      e.observations.row(t) = Eigen::Map<const Eigen::RowVectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
      const int a = r.grid_actions[static_cast<std::size_t>(t)];
      e.actions(t, a) = 1.0;
      e.action_ids.push_back(a);
      grid::apply(s, static_cast<grid::Action>(a));
    }
  } else {
    reacher::ReacherState s = initial_reacher_state(r);
    for (int t = 0; t < steps; ++t) {
      const auto obs = reacher::observe(s);
      e.observations.row(t) = Eigen::Map<const Eigen::RowVectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
      const auto& a = r.reacher_actions[static_cast<std::size_t>(t)];
      e.actions(t, 0) = a[0];
      e.actions(t, 1) = a[1];
      reacher::apply(s, a);
    }
  }
  return e;
}

Batch collate(const std::vector<const EpisodeTensors*>& episodes, int max_steps) {
  if (episodes.empty()) throw std::invalid_argument("collate: no episodes");
  Batch b;
  b.env = episodes.front()->env;
  b.batch = static_cast<int>(episodes.size());
  int longest = 0;
  for (const auto* e : episodes) {
    if (!(e->env == b.env)) throw std::invalid_argument("collate: episodes from different environments");
    if (e->length() < 1) throw std::invalid_argument("collate: empty episode");
    longest = std::max(longest, e->length());
  }
  if (max_steps > 0 && longest > max_steps)
    throw std::invalid_argument("collate: episode of length " + std::to_string(longest) + " exceeds max_T " +
                                std::to_string(max_steps));
  b.steps = max_steps > 0 ? max_steps : longest;
  const int obs_size = b.env.observation_size();
  const int act_size = b.env.action_size();
  const Eigen::Index rows = static_cast<Eigen::Index>(b.steps) * b.batch;
  b.observations = Matrix::Zero(rows, obs_size);
  b.actions = Matrix::Zero(rows, act_size);
  if (b.env.discrete_actions()) b.action_ids.assign(static_cast<std::size_t>(rows), -1);
  b.valid = Matrix::Zero(b.batch, b.steps);
  for (int i = 0; i < b.batch; ++i) {
    const auto& e = *episodes[static_cast<std::size_t>(i)];
    b.lengths.push_back(e.length());
    b.boundaries.push_back(e.boundaries);
    b.task_types.push_back(e.task_types);
    for (int t = 0; t < e.length(); ++t) {
      const Eigen::Index row = static_cast<Eigen::Index>(t) * b.batch + i;
      b.observations.row(row) = e.observations.row(t);
      b.actions.row(row) = e.actions.row(t);
      if (b.env.discrete_actions()) b.action_ids[static_cast<std::size_t>(row)] = e.action_ids[static_cast<std::size_t>(t)];
      b.valid(i, t) = 1.0;
    }
  }
  return b;
}

Batch make_batch(const std::vector<EpisodeRecord>& records, int max_steps) {
  std::vector<EpisodeTensors> prepared;
  prepared.reserve(records.size());
  for (const auto& r : records) prepared.push_back(prepare_episode(r));
  std::vector<const EpisodeTensors*> ptrs;
  for (const auto& p : prepared) ptrs.push_back(&p);
  return collate(ptrs, max_steps);
}

}  // namespace compile
