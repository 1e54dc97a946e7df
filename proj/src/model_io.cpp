#include "compile/model_io.hpp"

#include <stdexcept>

namespace compile {

LoadedModel load_model(const std::filesystem::path& path) {
  CheckpointData ck = load_checkpoint(path);
  LoadedModel out;
  try {
    out.header = nlohmann::json::parse(ck.header_json);
    out.kind = out.header.at("model").get<std::string>();
    out.env = env_from_json(out.header.at("env"));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": bad checkpoint header: " + e.what());
  }
  if (out.kind == "compile" || out.kind == "vae-bc") {
    out.compile = std::make_unique<CompILEModel>(CompILEConfig::from_json(out.header.at("config")), out.env, 0);
    assign_parameters(out.compile->params(), ck.params);
  } else if (out.kind == "surprisal") {
    out.surprisal = std::make_unique<SurprisalModel>(SurprisalConfig::from_json(out.header.at("config")), out.env, 0);
    assign_parameters(out.surprisal->params(), ck.params);
  } else {
    throw std::runtime_error(path.string() + ": unknown model kind '" + out.kind + "'");
  }
  return out;
}

std::string describe(const EnvSpec& env) {
  std::string s(to_string(env.kind));
  if (env.kind == EnvKind::Grid) s += " " + std::to_string(env.grid_size) + "x" + std::to_string(env.grid_size);
  return s;
}

void require_same_env(const EnvSpec& model, const EnvSpec& data) {
  if (!(model == data))
    throw std::invalid_argument("environment mismatch: model is " + describe(model) + ", data is " + describe(data));
}

}  // namespace compile
