#include "compile/segmentation.hpp"

#include <cmath>
#include <stdexcept>

#include "compile/rng.hpp"

namespace compile {

namespace {

// F = y U with U[j][s] = 1 for j < s: exclusive cumulative sum along a row.
Matrix exclusive_cumsum_operator(int steps) {
  Matrix u = Matrix::Zero(steps, steps);
  for (int j = 0; j < steps; ++j)
    for (int s = j + 1; s < steps; ++s) u(j, s) = 1.0;
  return u;
}

}  // namespace

SoftSegmentation segment_probs_and_masks(ad::Graph& g, const std::vector<ad::Var>& y, int batch, int steps) {
  SoftSegmentation out;
  const ad::Var ones = g.constant(Matrix::Ones(batch, steps));
  if (y.empty()) {
    out.segprobs.push_back(ones);
    out.masks.push_back(ones);
    return out;
  }
  const ad::Var u = g.constant(exclusive_cumsum_operator(steps));
  ad::Var prefix = ones;  // prod_{j<i} F_j
  for (const auto& yi : y) {
    if (yi.rows() != batch || yi.cols() != steps) throw std::invalid_argument("segment_probs_and_masks: shape");
    const ad::Var cdf = ad::matmul(yi, u);
    out.masks.push_back(prefix);
    out.segprobs.push_back(ad::mul(ad::one_minus(cdf), prefix));
    prefix = ad::mul(prefix, cdf);
  }
  out.masks.push_back(prefix);
  out.segprobs.push_back(prefix);
  return out;
}

SegmentationMatrices segment_probs_and_masks(const Matrix& y) {
  ad::Graph g(false);
  const int steps = static_cast<int>(y.cols());
  std::vector<ad::Var> rows;
  for (Eigen::Index i = 0; i < y.rows(); ++i) rows.push_back(g.constant(y.row(i)));
  const auto soft = segment_probs_and_masks(g, rows, 1, steps);
  SegmentationMatrices out{Matrix(soft.segprobs.size(), steps), Matrix(soft.masks.size(), steps)};
  for (std::size_t i = 0; i < soft.segprobs.size(); ++i) {
    out.segprobs.row(static_cast<Eigen::Index>(i)) = soft.segprobs[i].value().row(0);
    out.masks.row(static_cast<Eigen::Index>(i)) = soft.masks[i].value().row(0);
  }
  return out;
}

std::vector<int> segment_ids(const std::vector<int>& boundaries, int steps) {
  std::vector<int> ids(static_cast<std::size_t>(steps), 0);
  for (int t = 0; t < steps; ++t) {
    int seg = 0;
    // step t (0-based) is step t + 1 (1-based); it belongs to a later segment
    // once it reaches that segment's first step.
    for (int b : boundaries)
      if (t + 1 >= b) ++seg;
    ids[static_cast<std::size_t>(t)] = seg;
  }
  return ids;
}

double NoiseKey::gumbel(int row, int col) const {
  const auto h = hash_coords(seed, stream, pass, static_cast<std::uint64_t>(row), static_cast<std::uint64_t>(col));
  return gumbel_from_uniform(hash_uniform(h));
}

double NoiseKey::normal(int row, int col) const {
  const auto h1 = hash_coords(seed, stream, pass, static_cast<std::uint64_t>(row), static_cast<std::uint64_t>(col));
  const auto h2 = mix64(h1 ^ 0x5bd1e995ULL);
  return std::sqrt(-2.0 * std::log(hash_uniform(h1))) * std::cos(2.0 * M_PI * hash_uniform(h2));
}

Matrix one_hot_rows(const std::vector<int>& index, int cols) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(index.size()), cols);
  for (std::size_t r = 0; r < index.size(); ++r)
    if (index[r] >= 0) m(static_cast<Eigen::Index>(r), index[r]) = 1.0;
  return m;
}

CategoricalDraw draw_categorical(ad::Graph& g, const ad::Var& logits, const Matrix* legal, double temperature,
                                 SampleMode mode, const NoiseKey& noise) {
  const Eigen::Index rows = logits.rows(), cols = logits.cols();
  CategoricalDraw d;
  if (legal) {
    if (legal->rows() != rows || legal->cols() != cols) throw std::invalid_argument("draw_categorical: legal shape");
    Matrix penalty = Matrix::Zero(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (legal->row(r).maxCoeff() <= 0.0) throw std::invalid_argument("draw_categorical: no legal position");
      for (Eigen::Index c = 0; c < cols; ++c)
        if ((*legal)(r, c) <= 0.0) penalty(r, c) = kIllegalLogit;
    }
    d.logits = ad::add(logits, g.constant(std::move(penalty)));
  } else {
    d.logits = logits;
  }
  d.log_q = ad::log_softmax_rows(d.logits);

  const Matrix& lv = d.logits.value();
  Matrix gumbel = Matrix::Zero(rows, cols);
  if (mode != SampleMode::Argmax)
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) gumbel(r, c) = noise.gumbel(static_cast<int>(r), static_cast<int>(c));
  const Matrix perturbed = lv + gumbel;

  d.choice.resize(static_cast<std::size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < cols; ++c)
      if (perturbed(r, c) > perturbed(r, best)) best = c;
    d.choice[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }

  if (mode == SampleMode::Relaxed) {
    const ad::Var scaled = ad::scale(ad::add(d.logits, g.constant(std::move(gumbel))), 1.0 / temperature);
    d.sample = ad::softmax_rows(scaled);
    d.log_sample = ad::log_softmax_rows(scaled);
  } else {
    Matrix hot = one_hot_rows(d.choice, static_cast<int>(cols));
    d.log_sample = g.constant(hot.unaryExpr([](double v) { return v > 0 ? 0.0 : kLogZero; }));
    d.sample = g.constant(std::move(hot));
  }
  return d;
}

}  // namespace compile
