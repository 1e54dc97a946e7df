#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "compile/baselines.hpp"
#include "json.hpp"

namespace compile {

// A checkpoint rebuilt into its model: "compile" and "vae-bc" give a
// CompILEModel, "surprisal" a SurprisalModel.
struct LoadedModel {
  std::string kind;
  nlohmann::json header;
  EnvSpec env;
  std::unique_ptr<CompILEModel> compile;
  std::unique_ptr<SurprisalModel> surprisal;
};

// Throws std::runtime_error on unreadable files, unknown model kinds or
// missing/misshaped arrays.
LoadedModel load_model(const std::filesystem::path& path);

// Throws std::invalid_argument when the data was generated for another environment.
void require_same_env(const EnvSpec& model, const EnvSpec& data);
std::string describe(const EnvSpec& env);

}  // namespace compile
