#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Graph records every operation applied to Vars; Graph::backward walks the
// record in reverse. Parameters are leaves whose gradients are accumulated
// into Parameter::grad. Graphs built with grad disabled keep values only.

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "compile/tensor.hpp"

namespace compile::ad {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Graph;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  using Backward = std::function<void(Graph&, const Matrix& out_grad, const Matrix& out_value)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  // One leaf per parameter per graph; repeated calls return the same Var.
  Var param(Parameter& p);

  // Seeds the 1x1 root with gradient 1 and propagates to every leaf.
  void backward(const Var& root);

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  // --- op implementation interface ---
  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  // Records an op output. `backward` is dropped when no input needs a gradient.
  Var emit(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var emit(Matrix value, const std::vector<Var>& inputs, Backward backward);
  // Adds `g` into the gradient of node `id` (no-op for nodes without grad).
  void accumulate(int id, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(int id, const Expr& g) {
    if (!requires_grad(id)) return;
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool has_grad = false;
    bool requires_grad = false;
    Backward backward;
    Parameter* param = nullptr;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_ids_;
  bool grad_enabled_;
};

inline const Matrix& Var::value() const { return graph_->value(id_); }

// Elementwise / linear algebra.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row);  // row: 1 x cols, broadcast over rows
Var mul_col(const Var& a, const Var& col);  // col: rows x 1, broadcast over cols
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var one_minus(const Var& a);

// Nonlinearities.
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
// log(max(a, floor)); zero gradient where clamped.
Var log_clamped(const Var& a, double floor);
Var softplus(const Var& a);
Var square(const Var& a);

// Row-wise reductions and normalizations.
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var logsumexp_rows(const Var& a);  // rows x 1
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var row_sum(const Var& a);   // rows x 1
Var col_sum(const Var& a);   // 1 x cols
Var sum(const Var& a);       // 1 x 1
// a(r, index[r]) as a rows x 1 column; index -1 yields 0.
Var pick(const Var& a, const std::vector<int>& index);

// Shape manipulation.
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& a, const std::vector<int>& index);
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);  // row-major order
Var transpose(const Var& a);
Var detach(const Var& a);

// 3x3 convolution, stride 1, zero padding 1, channels-last images.
// x: N x (H*W*Cin); weight: (9*Cin) x Cout; bias: 1 x Cout -> N x (H*W*Cout).
Var conv3x3(const Var& x, const Var& weight, const Var& bias, int height, int width, int in_channels);

}  // namespace compile::ad
