#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "compile/autodiff.hpp"
#include "compile/rng.hpp"

namespace compile {

using ad::Parameter;

class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  // Throws std::invalid_argument on duplicate names.
  Parameter& add(const std::string& name, Matrix init);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t num_scalars() const;
  void zero_grad();

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Uniform(-bound, bound) initialisation.
Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}
  void step(ParameterStore& params);
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  std::int64_t steps_taken() const { return t_; }

 private:
  AdamOptions options_;
  std::int64_t t_ = 0;
  std::unordered_map<std::string, std::pair<Matrix, Matrix>> moments_;
};

// Checkpoint container:
//   8 bytes  magic "CPLCKPT1"
//   u64      length of the UTF-8 JSON header, then the header itself
//   u32      number of arrays
//   per array: u32 name length, name bytes, u32 rows, u32 cols,
//              u8 element width (4 or 8), rows*cols little-endian IEEE floats
//              in row-major order.
struct CheckpointData {
  std::string header_json;
  ParameterStore params;
};

void save_checkpoint(const std::filesystem::path& path, const std::string& header_json,
                     const ParameterStore& params);
CheckpointData load_checkpoint(const std::filesystem::path& path);
// Copies every array from `source` into the same-named parameter of `target`;
// throws std::runtime_error naming the first missing or misshaped array.
void assign_parameters(ParameterStore& target, const ParameterStore& source);

}  // namespace compile
