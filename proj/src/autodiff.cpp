#include "compile/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace compile::ad {
namespace {

void require_same_graph(const Var& a, const Var& b) {
  if (a.graph() != b.graph()) throw std::logic_error("autodiff: vars from different graphs");
}

void require_shape(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("autodiff: shape mismatch in ") + what);
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Graph::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(Parameter& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return {this, it->second};
  Node n;
  n.value = p.value;
  n.requires_grad = grad_enabled_;
  n.param = grad_enabled_ ? &p : nullptr;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_ids_[&p] = id;
  return {this, id};
}

Var Graph::emit(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  if (grad_enabled_)
    for (const auto& in : inputs) needs = needs || requires_grad(in.id());
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::emit(Matrix value, const std::vector<Var>& inputs, Backward backward) {
  bool needs = false;
  if (grad_enabled_)
    for (const auto& in : inputs) needs = needs || requires_grad(in.id());
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Graph::accumulate(int id, const Matrix& g) { accumulate_expr(id, g); }

void Graph::backward(const Var& root) {
  if (root.graph() != this) throw std::logic_error("autodiff: backward on foreign var");
  if (root.rows() != 1 || root.cols() != 1) throw std::invalid_argument("autodiff: backward root must be 1x1");
  if (!requires_grad(root.id())) return;
  accumulate(root.id(), Matrix::Ones(1, 1));
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) continue;
    if (n.backward) {
      const Matrix grad = std::move(n.grad);
      n.has_grad = false;
      n.backward(*this, grad, n.value);
    } else if (n.param != nullptr) {
      if (n.param->grad.rows() != n.value.rows() || n.param->grad.cols() != n.value.cols())
        n.param->zero_grad();
      n.param->grad += n.grad;
      n.has_grad = false;
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise / linear algebra

Var matmul(const Var& a, const Var& b) {
  require_same_graph(a, b);
  require_shape(a.cols() == b.rows(), "matmul");
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value() * b.value();
  return a.graph()->emit(std::move(out), {a, b}, [ia, ib](Graph& g, const Matrix& d, const Matrix&) {
    if (g.requires_grad(ia)) g.accumulate_expr(ia, d * g.value(ib).transpose());
    if (g.requires_grad(ib)) g.accumulate_expr(ib, g.value(ia).transpose() * d);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_graph(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  const int ia = a.id(), ib = b.id();
  return a.graph()->emit(a.value() + b.value(), {a, b}, [ia, ib](Graph& g, const Matrix& d, const Matrix&) {
    g.accumulate(ia, d);
    g.accumulate(ib, d);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_graph(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
  const int ia = a.id(), ib = b.id();
  return a.graph()->emit(a.value() - b.value(), {a, b}, [ia, ib](Graph& g, const Matrix& d, const Matrix&) {
    g.accumulate(ia, d);
    g.accumulate_expr(ib, -d);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_graph(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul");
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value());
  return a.graph()->emit(std::move(out), {a, b}, [ia, ib](Graph& g, const Matrix& d, const Matrix&) {
    if (g.requires_grad(ia)) g.accumulate_expr(ia, d.cwiseProduct(g.value(ib)));
    if (g.requires_grad(ib)) g.accumulate_expr(ib, d.cwiseProduct(g.value(ia)));
  });
}

Var add_row(const Var& a, const Var& row) {
  require_same_graph(a, row);
  require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row");
  const int ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.graph()->emit(std::move(out), {a, row}, [ia, ir](Graph& g, const Matrix& d, const Matrix&) {
    g.accumulate(ia, d);
    if (g.requires_grad(ir)) g.accumulate_expr(ir, d.colwise().sum());
  });
}

Var mul_col(const Var& a, const Var& col) {
  require_same_graph(a, col);
  require_shape(col.cols() == 1 && col.rows() == a.rows(), "mul_col");
  const int ia = a.id(), ic = col.id();
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  return a.graph()->emit(std::move(out), {a, col}, [ia, ic](Graph& g, const Matrix& d, const Matrix&) {
    if (g.requires_grad(ia))
      g.accumulate_expr(ia, (d.array().colwise() * g.value(ic).col(0).array()).matrix());
    if (g.requires_grad(ic)) g.accumulate_expr(ic, d.cwiseProduct(g.value(ia)).rowwise().sum());
  });
}

Var scale(const Var& a, double s) {
  const int ia = a.id();
  return a.graph()->emit(a.value() * s, {a},
                         [ia, s](Graph& g, const Matrix& d, const Matrix&) { g.accumulate_expr(ia, d * s); });
}

Var add_scalar(const Var& a, double s) {
  const int ia = a.id();
  Matrix out = a.value().array() + s;
  return a.graph()->emit(std::move(out), {a}, [ia](Graph& g, const Matrix& d, const Matrix&) { g.accumulate(ia, d); });
}

Var one_minus(const Var& a) {
  const int ia = a.id();
  Matrix out = 1.0 - a.value().array();
  return a.graph()->emit(std::move(out), {a},
                         [ia](Graph& g, const Matrix& d, const Matrix&) { g.accumulate_expr(ia, -d); });
}

// ---------------------------------------------------------------------------
// Nonlinearities

Var relu(const Var& a) {
  const int ia = a.id();
  Matrix out = a.value().cwiseMax(0.0);
  return a.graph()->emit(std::move(out), {a}, [ia](Graph& g, const Matrix& d, const Matrix& y) {
    g.accumulate_expr(ia, (y.array() > 0.0).select(d, 0.0).matrix());
  });
}

Var sigmoid(const Var& a) {
  const int ia = a.id();
  Matrix out = a.value().unaryExpr(&stable_sigmoid);
  return a.graph()->emit(std::move(out), {a}, [ia](Graph& g, const Matrix& d, const Matrix& y) {
    g.accumulate_expr(ia, (d.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var tanh(const Var& a) {
  const int ia = a.id();
  Matrix out = a.value().array().tanh();
  return a.graph()->emit(std::move(out), {a}, [ia](Graph& g, const Matrix& d, const Matrix& y) {
    g.accumulate_expr(ia, (d.array() * (1.0 - y.array().square())).matrix());
  });
}

Var exp(const Var& a) {
  const int ia = a.id();
  Matrix out = a.value().array().exp();
  return a.graph()->emit(std::move(out), {a}, [ia](Graph& g, const Matrix& d, const Matrix& y) {
    g.accumulate_expr(ia, d.cwiseProduct(y));
  });
}

Var log(const Var& a) {
  const int ia = a.id();
  Matrix out = a.value().array().log();
  return a.graph()->emit(std::move(out), {a}, [ia](Graph& g, const Matrix& d, const Matrix&) {
    g.accumulate_expr(ia, d.cwiseQuotient(g.value(ia)));
  });
}

Var log_clamped(const Var& a, double floor) {
  const int ia = a.id();
  Matrix out = a.value().cwiseMax(floor).array().log();
  return a.graph()->emit(std::move(out), {a}, [ia, floor](Graph& g, const Matrix& d, const Matrix&) {
    const Matrix& x = g.value(ia);
    g.accumulate_expr(ia, (x.array() > floor).select(d.array() / x.array(), 0.0).matrix());
  });
}

Var softplus(const Var& a) {
  const int ia = a.id();
  Matrix out = a.value().unaryExpr([](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); });
  return a.graph()->emit(std::move(out), {a}, [ia](Graph& g, const Matrix& d, const Matrix&) {
    g.accumulate_expr(ia, d.cwiseProduct(g.value(ia).unaryExpr(&stable_sigmoid)));
  });
}

Var square(const Var& a) {
  const int ia = a.id();
  Matrix out = a.value().array().square();
  return a.graph()->emit(std::move(out), {a}, [ia](Graph& g, const Matrix& d, const Matrix&) {
    g.accumulate_expr(ia, (2.0 * d.array() * g.value(ia).array()).matrix());
  });
}

// ---------------------------------------------------------------------------
// Row-wise reductions

Var softmax_rows(const Var& a) {
  const int ia = a.id();
  const Matrix& x = a.value();
  Matrix out = (x.colwise() - x.rowwise().maxCoeff()).array().exp();
  out.array().colwise() /= out.rowwise().sum().array();
  return a.graph()->emit(std::move(out), {a}, [ia](Graph& g, const Matrix& d, const Matrix& y) {
    const Eigen::VectorXd dot = d.cwiseProduct(y).rowwise().sum();
    g.accumulate_expr(ia, (y.array() * (d.colwise() - dot).array()).matrix());
  });
}

Var log_softmax_rows(const Var& a) {
  const int ia = a.id();
  const Matrix& x = a.value();
  const Eigen::VectorXd mx = x.rowwise().maxCoeff();
  const Eigen::VectorXd lse = mx.array() + (x.colwise() - mx).array().exp().rowwise().sum().log();
  Matrix out = x.colwise() - lse;
  return a.graph()->emit(std::move(out), {a}, [ia](Graph& g, const Matrix& d, const Matrix& y) {
    const Eigen::VectorXd total = d.rowwise().sum();
    g.accumulate_expr(ia, (d.array() - y.array().exp().colwise() * total.array()).matrix());
  });
}

Var logsumexp_rows(const Var& a) {
  const int ia = a.id();
  const Matrix& x = a.value();
  const Eigen::VectorXd mx = x.rowwise().maxCoeff();
  Matrix out = (mx.array() + (x.colwise() - mx).array().exp().rowwise().sum().log()).matrix();
  return a.graph()->emit(std::move(out), {a}, [ia](Graph& g, const Matrix& d, const Matrix& y) {
    const Matrix& x = g.value(ia);
    Matrix w = (x.colwise() - y.col(0)).array().exp();
    g.accumulate_expr(ia, (w.array().colwise() * d.col(0).array()).matrix());
  });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
  require_same_graph(x, gain);
  require_same_graph(x, bias);
  require_shape(gain.rows() == 1 && gain.cols() == x.cols() && bias.rows() == 1 && bias.cols() == x.cols(),
                "layer_norm_rows");
  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  const Matrix& v = x.value();
  const double n = static_cast<double>(v.cols());
  const Eigen::VectorXd mean = v.rowwise().mean();
  Matrix centered = v.colwise() - mean;
  const Eigen::VectorXd inv_std = ((centered.array().square().rowwise().sum() / n) + eps).rsqrt();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  return x.graph()->emit(
      std::move(out), {x, gain, bias},
      [ix, ig, ib, xhat = std::move(xhat), inv_std, n](Graph& g, const Matrix& d, const Matrix&) {
        if (g.requires_grad(ib)) g.accumulate_expr(ib, d.colwise().sum());
        if (g.requires_grad(ig)) g.accumulate_expr(ig, d.cwiseProduct(xhat).colwise().sum());
        if (g.requires_grad(ix)) {
          const Matrix dxhat = d.array().rowwise() * g.value(ig).row(0).array();
          const Eigen::VectorXd m1 = dxhat.rowwise().mean();
          const Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
          Matrix dx = ((dxhat.colwise() - m1).array() - xhat.array().colwise() * m2.array()).colwise() *
                      inv_std.array();
          g.accumulate(ix, dx);
        }
        (void)n;
      });
}

Var row_sum(const Var& a) {
  const int ia = a.id();
  const Eigen::Index cols = a.cols();
  Matrix out = a.value().rowwise().sum();
  return a.graph()->emit(std::move(out), {a}, [ia, cols](Graph& g, const Matrix& d, const Matrix&) {
    g.accumulate_expr(ia, d.col(0).replicate(1, cols));
  });
}

Var col_sum(const Var& a) {
  const int ia = a.id();
  const Eigen::Index rows = a.rows();
  Matrix out = a.value().colwise().sum();
  return a.graph()->emit(std::move(out), {a}, [ia, rows](Graph& g, const Matrix& d, const Matrix&) {
    g.accumulate_expr(ia, d.row(0).replicate(rows, 1));
  });
}

Var sum(const Var& a) {
  const int ia = a.id();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.graph()->emit(std::move(out), {a}, [ia, rows, cols](Graph& g, const Matrix& d, const Matrix&) {
    g.accumulate_expr(ia, Matrix::Constant(rows, cols, d(0, 0)));
  });
}

Var pick(const Var& a, const std::vector<int>& index) {
  require_shape(static_cast<Eigen::Index>(index.size()) == a.rows(), "pick");
  const int ia = a.id();
  const Matrix& x = a.value();
  Matrix out = Matrix::Zero(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const int c = index[static_cast<std::size_t>(r)];
    if (c >= 0) out(r, 0) = x(r, c);
  }
  const Eigen::Index rows = x.rows(), cols = x.cols();
  return a.graph()->emit(std::move(out), {a}, [ia, index, rows, cols](Graph& g, const Matrix& d, const Matrix&) {
    Matrix dx = Matrix::Zero(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const int c = index[static_cast<std::size_t>(r)];
      if (c >= 0) dx(r, c) = d(r, 0);
    }
    g.accumulate(ia, dx);
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("autodiff: concat_cols of nothing");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    require_shape(p.rows() == rows, "concat_cols");
    require_same_graph(p, parts.front());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    layout.emplace_back(p.id(), at);
    at += p.cols();
  }
  return parts.front().graph()->emit(std::move(out), parts, [layout](Graph& g, const Matrix& d, const Matrix&) {
    for (const auto& [id, start] : layout)
      if (g.requires_grad(id)) g.accumulate_expr(id, d.middleCols(start, g.value(id).cols()));
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("autodiff: concat_rows of nothing");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    require_shape(p.cols() == cols, "concat_rows");
    require_same_graph(p, parts.front());
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    layout.emplace_back(p.id(), at);
    at += p.rows();
  }
  return parts.front().graph()->emit(std::move(out), parts, [layout](Graph& g, const Matrix& d, const Matrix&) {
    for (const auto& [id, start] : layout)
      if (g.requires_grad(id)) g.accumulate_expr(id, d.middleRows(start, g.value(id).rows()));
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  require_shape(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols");
  const int ia = a.id();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Matrix out = a.value().middleCols(start, count);
  return a.graph()->emit(std::move(out), {a}, [ia, start, count, rows, cols](Graph& g, const Matrix& d, const Matrix&) {
    Matrix dx = Matrix::Zero(rows, cols);
    dx.middleCols(start, count) = d;
    g.accumulate(ia, dx);
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  require_shape(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows");
  const int ia = a.id();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Matrix out = a.value().middleRows(start, count);
  return a.graph()->emit(std::move(out), {a}, [ia, start, count, rows, cols](Graph& g, const Matrix& d, const Matrix&) {
    Matrix dx = Matrix::Zero(rows, cols);
    dx.middleRows(start, count) = d;
    g.accumulate(ia, dx);
  });
}

Var gather_rows(const Var& a, const std::vector<int>& index) {
  const int ia = a.id();
  const Matrix& x = a.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), x.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || index[r] >= x.rows()) throw std::out_of_range("autodiff: gather_rows index");
    out.row(static_cast<Eigen::Index>(r)) = x.row(index[r]);
  }
  const Eigen::Index rows = x.rows(), cols = x.cols();
  return a.graph()->emit(std::move(out), {a}, [ia, index, rows, cols](Graph& g, const Matrix& d, const Matrix&) {
    Matrix dx = Matrix::Zero(rows, cols);
    for (std::size_t r = 0; r < index.size(); ++r) dx.row(index[r]) += d.row(static_cast<Eigen::Index>(r));
    g.accumulate(ia, dx);
  });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  require_shape(rows * cols == a.rows() * a.cols(), "reshape");
  const int ia = a.id();
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return a.graph()->emit(std::move(out), {a}, [ia, r0, c0](Graph& g, const Matrix& d, const Matrix&) {
    g.accumulate_expr(ia, Eigen::Map<const Matrix>(d.data(), r0, c0));
  });
}

Var transpose(const Var& a) {
  const int ia = a.id();
  Matrix out = a.value().transpose();
  return a.graph()->emit(std::move(out), {a},
                         [ia](Graph& g, const Matrix& d, const Matrix&) { g.accumulate_expr(ia, d.transpose()); });
}

Var detach(const Var& a) { return a.graph()->constant(a.value()); }

// ---------------------------------------------------------------------------
// Convolution

Var conv3x3(const Var& x, const Var& weight, const Var& bias, int height, int width, int in_channels) {
  require_same_graph(x, weight);
  require_same_graph(x, bias);
  const Eigen::Index n = x.rows();
  const Eigen::Index pixels = static_cast<Eigen::Index>(height) * width;
  const Eigen::Index patch = 9 * static_cast<Eigen::Index>(in_channels);
  require_shape(x.cols() == pixels * in_channels, "conv3x3 input");
  require_shape(weight.rows() == patch, "conv3x3 weight");
  const Eigen::Index out_channels = weight.cols();
  require_shape(bias.rows() == 1 && bias.cols() == out_channels, "conv3x3 bias");

  // im2col: one row per (image, pixel), one column per (tap, channel).
  Matrix cols = Matrix::Zero(n * pixels, patch);
  const Matrix& xv = x.value();
  for (Eigen::Index img = 0; img < n; ++img) {
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const Eigen::Index row = img * pixels + r * width + c;
        for (int dr = -1; dr <= 1; ++dr) {
          const int rr = r + dr;
          if (rr < 0 || rr >= height) continue;
          for (int dc = -1; dc <= 1; ++dc) {
            const int cc = c + dc;
            if (cc < 0 || cc >= width) continue;
            const Eigen::Index tap = (dr + 1) * 3 + (dc + 1);
            cols.block(row, tap * in_channels, 1, in_channels) =
                xv.block(img, (static_cast<Eigen::Index>(rr) * width + cc) * in_channels, 1, in_channels);
          }
        }
      }
    }
  }
  Matrix y = cols * weight.value();
  y.rowwise() += bias.value().row(0);
  Matrix out = Eigen::Map<const Matrix>(y.data(), n, pixels * out_channels);

  const int ix = x.id(), iw = weight.id(), ib = bias.id();
  return x.graph()->emit(
      std::move(out), {x, weight, bias},
      [ix, iw, ib, cols = std::move(cols), n, pixels, out_channels, height, width, in_channels](
          Graph& g, const Matrix& d, const Matrix&) {
        const Eigen::Map<const Matrix> dy(d.data(), n * pixels, out_channels);
        if (g.requires_grad(ib)) g.accumulate_expr(ib, dy.colwise().sum());
        if (g.requires_grad(iw)) g.accumulate_expr(iw, cols.transpose() * dy);
        if (!g.requires_grad(ix)) return;
        const Matrix dcols = dy * g.value(iw).transpose();
        Matrix dx = Matrix::Zero(n, pixels * in_channels);
        for (Eigen::Index img = 0; img < n; ++img) {
          for (int r = 0; r < height; ++r) {
            for (int c = 0; c < width; ++c) {
              const Eigen::Index row = img * pixels + r * width + c;
              for (int dr = -1; dr <= 1; ++dr) {
                const int rr = r + dr;
                if (rr < 0 || rr >= height) continue;
                for (int dc = -1; dc <= 1; ++dc) {
                  const int cc = c + dc;
                  if (cc < 0 || cc >= width) continue;
                  const Eigen::Index tap = (dr + 1) * 3 + (dc + 1);
                  dx.block(img, (static_cast<Eigen::Index>(rr) * width + cc) * in_channels, 1, in_channels) +=
                      dcols.block(row, tap * in_channels, 1, in_channels);
                }
              }
            }
          }
        }
        g.accumulate(ix, dx);
      });
}

}  // namespace compile::ad
