#pragma once

#include <cstdint>
#include <vector>

#include "compile/autodiff.hpp"

namespace compile {

// Boundary distributions are stored over step positions j = 0..T-1, where
// position j stands for boundary b = j + 2 (the first step of the next
// segment, 1-based). b = 1 cannot be represented; j = T - 1 is b = T + 1.
inline int boundary_to_position(int b) { return b - 2; }
inline int position_to_boundary(int j) { return j + 2; }

// segprobs[i] = P(t in C_i), masks[i] = RNN state mask of pass i; each
// batch x steps. One entry per segment (M = y.size() + 1).
struct SoftSegmentation {
  std::vector<ad::Var> segprobs;
  std::vector<ad::Var> masks;
};

SoftSegmentation segment_probs_and_masks(ad::Graph& g, const std::vector<ad::Var>& y, int batch, int steps);

// Single-sequence convenience form: y rows are the M - 1 boundary
// distributions; returns M x T matrices.
struct SegmentationMatrices {
  Matrix segprobs;
  Matrix masks;
};
SegmentationMatrices segment_probs_and_masks(const Matrix& y);

// Hard segment id (0-based) of every step for sorted boundaries.
std::vector<int> segment_ids(const std::vector<int>& boundaries, int steps);

enum class SampleMode {
  Relaxed,   // Gumbel-softmax with temperature
  Discrete,  // exact one-hot of a Gumbel-max draw
  Argmax     // exact one-hot of the largest logit (smallest index on ties)
};

// Addresses the Gumbel noise of one draw: the value at (row, col) depends only
// on (seed, stream, pass, row, col), never on shapes or padding.
struct NoiseKey {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::uint64_t pass = 0;
  double gumbel(int row, int col) const;
  double normal(int row, int col) const;
};

struct CategoricalDraw {
  ad::Var logits;  // with -1e9 at illegal entries
  ad::Var log_q;   // log_softmax(logits)
  ad::Var sample;  // rows on the simplex
  ad::Var log_sample;  // log of sample; -1e30 for the zeros of a hard one-hot
  std::vector<int> choice;  // argmax of each sample row
};

inline constexpr double kIllegalLogit = -1e9;
inline constexpr double kLogZero = -1e30;

// legal (same shape as logits, 1 = allowed) may be null. Throws
// std::invalid_argument when a row has no legal entry.
CategoricalDraw draw_categorical(ad::Graph& g, const ad::Var& logits, const Matrix* legal, double temperature,
                                 SampleMode mode, const NoiseKey& noise);

// One-hot rows; negative indices give all-zero rows.
Matrix one_hot_rows(const std::vector<int>& index, int cols);

}  // namespace compile
