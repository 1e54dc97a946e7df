#include <cmath>

#include "compile/autodiff.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace compile;
using namespace testing;

namespace {

// Random linear functional of `out` so every output entry contributes.
Var probe(Graph& g, const Var& out, std::uint64_t seed = 99) {
  Rng rng(seed);
  return ad::sum(ad::mul(out, g.constant(random_matrix(out.rows(), out.cols(), rng))));
}

double check_unary(Var (*op)(const Var&), Matrix x) {
  std::vector<Parameter> ps{make_param("x", std::move(x))};
  return gradient_error([op](Graph& g, const std::vector<Var>& v) { return probe(g, op(v[0])); }, ps);
}

}  // namespace

TEST_CASE("elementwise ops match central differences") {
  Rng rng(1);
  const Matrix x = random_matrix(3, 4, rng, 2.0);
  CHECK(check_unary(&ad::relu, x) < 1e-6);
  CHECK(check_unary(&ad::sigmoid, x) < 1e-6);
  CHECK(check_unary(&ad::tanh, x) < 1e-6);
  CHECK(check_unary(&ad::exp, x) < 1e-6);
  CHECK(check_unary(&ad::softplus, x) < 1e-6);
  CHECK(check_unary(&ad::square, x) < 1e-6);
  CHECK(check_unary(&ad::one_minus, x) < 1e-6);
  CHECK(check_unary(&ad::softmax_rows, x) < 1e-6);
  CHECK(check_unary(&ad::log_softmax_rows, x) < 1e-6);
  CHECK(check_unary(&ad::logsumexp_rows, x) < 1e-6);
  CHECK(check_unary(&ad::row_sum, x) < 1e-6);
  CHECK(check_unary(&ad::col_sum, x) < 1e-6);
  CHECK(check_unary(&ad::transpose, x) < 1e-6);
  const Matrix pos = (x.array().abs() + 0.5).matrix();
  CHECK(check_unary(&ad::log, pos) < 1e-6);
}

TEST_CASE("binary and broadcast ops") {
  Rng rng(2);
  std::vector<Parameter> ps{make_param("a", random_matrix(3, 4, rng)), make_param("b", random_matrix(3, 4, rng)),
                            make_param("w", random_matrix(4, 2, rng)), make_param("r", random_matrix(1, 4, rng)),
                            make_param("c", random_matrix(3, 1, rng))};
  auto fn = [](Graph& g, const std::vector<Var>& v) {
    Var s = ad::add(ad::mul(v[0], v[1]), ad::sub(v[0], ad::scale(v[1], 0.3)));
    s = ad::mul_col(ad::add_row(s, v[3]), v[4]);
    return probe(g, ad::add_scalar(ad::matmul(s, v[2]), 1.5));
  };
  CHECK(gradient_error(fn, ps) < 1e-6);
}

TEST_CASE("shape ops") {
  Rng rng(3);
  std::vector<Parameter> ps{make_param("a", random_matrix(4, 3, rng)), make_param("b", random_matrix(4, 2, rng))};
  auto fn = [](Graph& g, const std::vector<Var>& v) {
    Var c = ad::concat_cols({v[0], v[1]});                 // 4 x 5
    Var r = ad::concat_rows({c, ad::slice_rows(c, 1, 2)});  // 6 x 5
    Var s = ad::slice_cols(r, 1, 3);                        // 6 x 3
    Var gth = ad::gather_rows(s, {5, 0, 0, 2});              // 4 x 3
    Var rs = ad::reshape(gth, 3, 4);
    Var picked = ad::pick(rs, {1, -1, 3});
    return ad::add(probe(g, rs), ad::sum(picked));
  };
  CHECK(gradient_error(fn, ps) < 1e-6);
}

TEST_CASE("pick ignores negative indices") {
  Graph g(false);
  Var x = g.constant((Matrix(2, 2) << 1, 2, 3, 4).finished());
  Var p = ad::pick(x, {1, -1});
  CHECK(p.value()(0, 0) == 2.0);
  CHECK(p.value()(1, 0) == 0.0);
}

TEST_CASE("layer norm and conv") {
  Rng rng(4);
  std::vector<Parameter> ps{make_param("x", random_matrix(3, 6, rng)), make_param("g", random_matrix(1, 6, rng)),
                            make_param("b", random_matrix(1, 6, rng))};
  auto ln = [](Graph& g, const std::vector<Var>& v) { return probe(g, ad::layer_norm_rows(v[0], v[1], v[2])); };
  CHECK(gradient_error(ln, ps) < 1e-5);

  const int h = 3, w = 4, cin = 2, cout = 3;
  std::vector<Parameter> cp{make_param("x", random_matrix(2, h * w * cin, rng)),
                            make_param("w", random_matrix(9 * cin, cout, rng)),
                            make_param("b", random_matrix(1, cout, rng))};
  auto conv = [&](Graph& g, const std::vector<Var>& v) { return probe(g, ad::conv3x3(v[0], v[1], v[2], h, w, cin)); };
  CHECK(gradient_error(conv, cp) < 1e-6);
}

TEST_CASE("conv3x3 matches a direct loop") {
  Rng rng(5);
  const int h = 4, w = 3, cin = 2, cout = 2;
  const Matrix x = random_matrix(1, h * w * cin, rng);
  const Matrix wt = random_matrix(9 * cin, cout, rng);
  const Matrix b = random_matrix(1, cout, rng);
  Graph g(false);
  const Matrix y = ad::conv3x3(g.constant(x), g.constant(wt), g.constant(b), h, w, cin).value();
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int o = 0; o < cout; ++o) {
        double acc = b(0, o);
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
            for (int k = 0; k < cin; ++k)
              acc += x(0, (rr * w + cc) * cin + k) * wt(((dr + 1) * 3 + dc + 1) * cin + k, o);
          }
        CHECK(y(0, (r * w + c) * cout + o) == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("parameter reuse accumulates and detach blocks") {
  Parameter p = make_param("p", Matrix::Constant(1, 1, 3.0));
  Graph g(true);
  Var a = g.param(p);
  Var b = g.param(p);
  CHECK(a.id() == b.id());
  g.backward(ad::add(ad::mul(a, b), ad::mul(ad::detach(a), a)));
  // d/dp (p^2 + c*p) with c = p held fixed: 2p + p
  CHECK(p.grad(0, 0) == doctest::Approx(9.0));
}

TEST_CASE("stable sigmoid and logsumexp at extremes") {
  Graph g(false);
  Var x = g.constant((Matrix(1, 3) << -800.0, 0.0, 800.0).finished());
  const Matrix s = ad::sigmoid(x).value();
  CHECK(s(0, 0) == doctest::Approx(0.0));
  CHECK(s(0, 2) == doctest::Approx(1.0));
  CHECK(ad::logsumexp_rows(x).value()(0, 0) == doctest::Approx(800.0));
  CHECK(std::isfinite(ad::log_softmax_rows(x).value()(0, 0)));
}
