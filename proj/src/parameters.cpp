#include "compile/parameters.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace compile {
namespace {

constexpr char kMagic[8] = {'C', 'P', 'L', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
}

template <typename T>
T read_le(std::istream& in) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == EOF) throw std::runtime_error("checkpoint: unexpected end of file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return static_cast<T>(v);
}

}  // namespace

Parameter& ParameterStore::add(const std::string& name, Matrix init) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  Parameter p;
  p.name = name;
  p.value = std::move(init);
  p.zero_grad();
  params_.push_back(std::move(p));
  index_[name] = params_.size() - 1;
  return params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return params_[it->second];
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t ParameterStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  return m;
}

void Adam::step(ParameterStore& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (Parameter* p : params.all()) {
    auto [it, inserted] = moments_.try_emplace(p->name);
    auto& [m, v] = it->second;
    if (inserted) {
      m = Matrix::Zero(p->value.rows(), p->value.cols());
      v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    m = options_.beta1 * m + (1.0 - options_.beta1) * p->grad;
    v = options_.beta2 * v + (1.0 - options_.beta2) * p->grad.cwiseAbs2();
    p->value.array() -= options_.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + options_.epsilon);
  }
}

void save_checkpoint(const std::filesystem::path& path, const std::string& header_json,
                     const ParameterStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint64_t>(out, header_json.size());
  out.write(header_json.data(), static_cast<std::streamsize>(header_json.size()));
  const auto all = params.all();
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(all.size()));
  for (const Parameter* p : all) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rows()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.cols()));
    out.put(8);
    for (Eigen::Index i = 0; i < p->value.size(); ++i)
      write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(p->value.data()[i]));
  }
  if (!out) throw std::runtime_error("error writing checkpoint '" + path.string() + "'");
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("'" + path.string() + "' is not a checkpoint file");
  CheckpointData data;
  const auto header_len = read_le<std::uint64_t>(in);
  data.header_json.resize(header_len);
  in.read(data.header_json.data(), static_cast<std::streamsize>(header_len));
  const auto count = read_le<std::uint32_t>(in);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name(read_le<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto rows = read_le<std::uint32_t>(in);
    const auto cols = read_le<std::uint32_t>(in);
    const int width = in.get();
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      if (width == 8) {
        m.data()[i] = std::bit_cast<double>(read_le<std::uint64_t>(in));
      } else if (width == 4) {
        m.data()[i] = static_cast<double>(std::bit_cast<float>(read_le<std::uint32_t>(in)));
      } else {
        throw std::runtime_error("checkpoint: unsupported element width");
      }
    }
    data.params.add(name, std::move(m));
  }
  return data;
}

void assign_parameters(ParameterStore& target, const ParameterStore& source) {
  for (Parameter* p : target.all()) {
    if (!source.contains(p->name)) throw std::runtime_error("checkpoint is missing array '" + p->name + "'");
    const Parameter& s = source.get(p->name);
    if (s.value.rows() != p->value.rows() || s.value.cols() != p->value.cols())
      throw std::runtime_error("checkpoint array '" + p->name + "' has the wrong shape");
    p->value = s.value;
  }
}

}  // namespace compile
