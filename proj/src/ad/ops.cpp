#include "ddgen/ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace ddgen::ad {
namespace {

Graph& same_graph(std::string_view op, Var a, Var b) {
  if (!a.valid() || !b.valid()) throw std::logic_error(std::string(op) + ": unbound operand");
  if (a.graph() != b.graph()) {
    throw std::logic_error(std::string(op) + ": operands belong to different graphs");
  }
  return *a.graph();
}

Graph& graph_of(std::string_view op, Var a) {
  if (!a.valid()) throw std::logic_error(std::string(op) + ": unbound operand");
  return *a.graph();
}

void require_same_shape(std::string_view op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

void accumulate(Matrix& dst, const Matrix& src) {
  double* d = dst.data().data();
  const double* s = src.data().data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

// Unary elementwise op; `deriv(x, y)` is dy/dx at input x with output y.
template <typename F, typename D>
Var unary(std::string_view op, Var a, F f, D deriv) {
  Graph& g = graph_of(op, a);
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return g.record(op, std::move(y), {a},
                  [a, deriv](const Matrix& out, const Matrix& gout, std::span<Matrix* const> pg) {
                    const Matrix& xv = a.value();
                    Matrix& gx = *pg[0];
                    for (std::size_t i = 0; i < xv.size(); ++i) {
                      gx[i] += gout[i] * deriv(xv[i], out[i]);
                    }
                  });
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = same_graph("add", a, b);
  require_same_shape("add", a.value(), b.value());
  Matrix y = a.value();
  accumulate(y, b.value());
  return g.record("add", std::move(y), {a, b},
                  [](const Matrix&, const Matrix& gout, std::span<Matrix* const> pg) {
                    if (pg[0]) accumulate(*pg[0], gout);
                    if (pg[1]) accumulate(*pg[1], gout);
                  });
}

Var sub(Var a, Var b) {
  Graph& g = same_graph("sub", a, b);
  require_same_shape("sub", a.value(), b.value());
  Matrix y = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return g.record("sub", std::move(y), {a, b},
                  [](const Matrix&, const Matrix& gout, std::span<Matrix* const> pg) {
                    if (pg[0]) accumulate(*pg[0], gout);
                    if (pg[1]) {
                      for (std::size_t i = 0; i < gout.size(); ++i) (*pg[1])[i] -= gout[i];
                    }
                  });
}

Var mul(Var a, Var b) {
  Graph& g = same_graph("mul", a, b);
  require_same_shape("mul", a.value(), b.value());
  Matrix y = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return g.record("mul", std::move(y), {a, b},
                  [a, b](const Matrix&, const Matrix& gout, std::span<Matrix* const> pg) {
                    const Matrix& av = a.value();
                    const Matrix& bv = b.value();
                    if (pg[0]) {
                      for (std::size_t i = 0; i < gout.size(); ++i) (*pg[0])[i] += gout[i] * bv[i];
                    }
                    if (pg[1]) {
                      for (std::size_t i = 0; i < gout.size(); ++i) (*pg[1])[i] += gout[i] * av[i];
                    }
                  });
}

Var scale(Var a, double s) {
  return unary(
      "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var add_row(Var a, Var bias) {
  Graph& g = same_graph("add_row", a, bias);
  const Matrix& av = a.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw ShapeError("add_row: bias " + bv.shape_string() + " does not fit " +
                     av.shape_string());
  }
  Matrix y = av;
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += bv[c];
  return g.record("add_row", std::move(y), {a, bias},
                  [](const Matrix&, const Matrix& gout, std::span<Matrix* const> pg) {
                    if (pg[0]) accumulate(*pg[0], gout);
                    if (pg[1]) {
                      for (std::size_t r = 0; r < gout.rows(); ++r)
                        for (std::size_t c = 0; c < gout.cols(); ++c) (*pg[1])[c] += gout(r, c);
                    }
                  });
}

Var sub_col(Var a, Var col) {
  Graph& g = same_graph("sub_col", a, col);
  const Matrix& av = a.value();
  const Matrix& cv = col.value();
  if (cv.cols() != 1 || cv.rows() != av.rows()) {
    throw ShapeError("sub_col: column " + cv.shape_string() + " does not fit " +
                     av.shape_string());
  }
  Matrix y = av;
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) -= cv[r];
  return g.record("sub_col", std::move(y), {a, col},
                  [](const Matrix&, const Matrix& gout, std::span<Matrix* const> pg) {
                    if (pg[0]) accumulate(*pg[0], gout);
                    if (pg[1]) {
                      for (std::size_t r = 0; r < gout.rows(); ++r)
                        for (std::size_t c = 0; c < gout.cols(); ++c) (*pg[1])[r] -= gout(r, c);
                    }
                  });
}

Var mul_col(Var a, Var col) {
  Graph& g = same_graph("mul_col", a, col);
  const Matrix& av = a.value();
  const Matrix& cv = col.value();
  if (cv.cols() != 1 || cv.rows() != av.rows()) {
    throw ShapeError("mul_col: column " + cv.shape_string() + " does not fit " +
                     av.shape_string());
  }
  Matrix y = av;
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) *= cv[r];
  return g.record("mul_col", std::move(y), {a, col},
                  [a, col](const Matrix&, const Matrix& gout, std::span<Matrix* const> pg) {
                    const Matrix& av = a.value();
                    const Matrix& cv = col.value();
                    for (std::size_t r = 0; r < gout.rows(); ++r) {
                      for (std::size_t c = 0; c < gout.cols(); ++c) {
                        if (pg[0]) (*pg[0])(r, c) += gout(r, c) * cv[r];
                        if (pg[1]) (*pg[1])[r] += gout(r, c) * av(r, c);
                      }
                    }
                  });
}

Var affine_cols(Var a, std::span<const double> scale_by, std::span<const double> shift) {
  Graph& g = graph_of("affine_cols", a);
  const Matrix& av = a.value();
  if (scale_by.size() != av.cols() || shift.size() != av.cols()) {
    throw ShapeError("affine_cols: " + std::to_string(scale_by.size()) + "/" +
                     std::to_string(shift.size()) + " coefficients for " + av.shape_string());
  }
  Matrix y = av;
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) = y(r, c) * scale_by[c] + shift[c];
  std::vector<double> s(scale_by.begin(), scale_by.end());
  return g.record("affine_cols", std::move(y), {a},
                  [s = std::move(s)](const Matrix&, const Matrix& gout,
                                     std::span<Matrix* const> pg) {
                    for (std::size_t r = 0; r < gout.rows(); ++r)
                      for (std::size_t c = 0; c < gout.cols(); ++c)
                        (*pg[0])(r, c) += gout(r, c) * s[c];
                  });
}

Var matmul(Var a, Var b) {
  Graph& g = same_graph("matmul", a, b);
  Matrix y = ad::matmul(a.value(), b.value());
  return g.record("matmul", std::move(y), {a, b},
                  [a, b](const Matrix&, const Matrix& gout, std::span<Matrix* const> pg) {
                    if (pg[0]) accumulate(*pg[0], ad::matmul_nt(gout, b.value()));
                    if (pg[1]) accumulate(*pg[1], ad::matmul_tn(a.value(), gout));
                  });
}

Var matmul_nt(Var a, Var b) {
  Graph& g = same_graph("matmul_nt", a, b);
  Matrix y = ad::matmul_nt(a.value(), b.value());
  return g.record("matmul_nt", std::move(y), {a, b},
                  [a, b](const Matrix&, const Matrix& gout, std::span<Matrix* const> pg) {
                    // y = a b^T: da = gout b, db = gout^T a
                    if (pg[0]) accumulate(*pg[0], ad::matmul(gout, b.value()));
                    if (pg[1]) accumulate(*pg[1], ad::matmul_tn(gout, a.value()));
                  });
}

Var transpose(Var a) {
  Graph& g = graph_of("transpose", a);
  return g.record("transpose", ad::transpose(a.value()), {a},
                  [](const Matrix&, const Matrix& gout, std::span<Matrix* const> pg) {
                    accumulate(*pg[0], ad::transpose(gout));
                  });
}

Var softmax_rows(Var a, const Matrix* allowed) {
  Graph& g = graph_of("softmax_rows", a);
  const Matrix& x = a.value();
  if (allowed != nullptr) require_same_shape("softmax_rows(mask)", x, *allowed);
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (allowed == nullptr || (*allowed)(r, c) != 0.0) mx = std::max(mx, x(r, c));
    }
    if (!std::isfinite(mx)) {
      throw std::domain_error("softmax_rows: row " + std::to_string(r) +
                              " has no allowed finite entry");
    }
    double total = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (allowed != nullptr && (*allowed)(r, c) == 0.0) continue;
      y(r, c) = std::exp(x(r, c) - mx);
      total += y(r, c);
    }
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) /= total;
  }
  return g.record("softmax_rows", std::move(y), {a},
                  [](const Matrix& out, const Matrix& gout, std::span<Matrix* const> pg) {
                    Matrix& gx = *pg[0];
                    for (std::size_t r = 0; r < out.rows(); ++r) {
                      double dot = 0.0;
                      for (std::size_t c = 0; c < out.cols(); ++c) dot += gout(r, c) * out(r, c);
                      for (std::size_t c = 0; c < out.cols(); ++c)
                        gx(r, c) += out(r, c) * (gout(r, c) - dot);
                    }
                  });
}

Var layer_norm(Var a, Var gamma, Var beta, double eps) {
  Graph& g = same_graph("layer_norm", a, gamma);
  same_graph("layer_norm", a, beta);
  const Matrix& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gamma.value().rows() != 1 || gamma.value().cols() != cols ||
      !gamma.value().same_shape(beta.value())) {
    throw ShapeError("layer_norm: gain/bias " + gamma.value().shape_string() + "/" +
                     beta.value().shape_string() + " do not fit " + x.shape_string());
  }
  const Matrix& gm = gamma.value();
  const Matrix& bt = beta.value();
  Matrix xhat(rows, cols);
  std::vector<double> inv_std(rows);
  Matrix y(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += x(r, c);
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (x(r, c) - mu) * (x(r, c) - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      xhat(r, c) = (x(r, c) - mu) * inv_std[r];
      y(r, c) = xhat(r, c) * gm[c] + bt[c];
    }
  }
  return g.record(
      "layer_norm", std::move(y), {a, gamma, beta},
      [gamma, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          const Matrix&, const Matrix& gout, std::span<Matrix* const> pg) {
        const Matrix& gm = gamma.value();
        const std::size_t rows = gout.rows(), cols = gout.cols();
        const double n = static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          if (pg[1] || pg[2]) {
            for (std::size_t c = 0; c < cols; ++c) {
              if (pg[1]) (*pg[1])[c] += gout(r, c) * xhat(r, c);
              if (pg[2]) (*pg[2])[c] += gout(r, c);
            }
          }
          if (!pg[0]) continue;
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            const double d = gout(r, c) * gm[c];
            sum_d += d;
            sum_dx += d * xhat(r, c);
          }
          for (std::size_t c = 0; c < cols; ++c) {
            const double d = gout(r, c) * gm[c];
            (*pg[0])(r, c) += inv_std[r] / n * (n * d - sum_d - xhat(r, c) * sum_dx);
          }
        }
      });
}

Var relu(Var a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Var square(Var a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var cos(Var a) {
  return unary(
      "cos", a, [](double x) { return std::cos(x); },
      [](double x, double) { return -std::sin(x); });
}

Var sin(Var a) {
  return unary(
      "sin", a, [](double x) { return std::sin(x); },
      [](double x, double) { return std::cos(x); });
}

Var concat_cols(Var a, Var b) {
  Graph& g = same_graph("concat_cols", a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw ShapeError("concat_cols: row mismatch " + av.shape_string() + " | " +
                     bv.shape_string());
  }
  const std::size_t ca = av.cols(), cb = bv.cols();
  Matrix y(av.rows(), ca + cb);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < ca; ++c) y(r, c) = av(r, c);
    for (std::size_t c = 0; c < cb; ++c) y(r, ca + c) = bv(r, c);
  }
  return g.record("concat_cols", std::move(y), {a, b},
                  [ca, cb](const Matrix&, const Matrix& gout, std::span<Matrix* const> pg) {
                    for (std::size_t r = 0; r < gout.rows(); ++r) {
                      if (pg[0])
                        for (std::size_t c = 0; c < ca; ++c) (*pg[0])(r, c) += gout(r, c);
                      if (pg[1])
                        for (std::size_t c = 0; c < cb; ++c) (*pg[1])(r, c) += gout(r, ca + c);
                    }
                  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Graph& g = graph_of("concat_rows", parts[0]);
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  std::vector<std::size_t> offsets;
  offsets.reserve(parts.size());
  for (const Var& p : parts) {
    if (p.graph() != &g) throw std::logic_error("concat_rows: operands from different graphs");
    if (p.value().cols() != cols) {
      throw ShapeError("concat_rows: column mismatch " + parts[0].value().shape_string() +
                       " vs " + p.value().shape_string());
    }
    offsets.push_back(rows);
    rows += p.value().rows();
  }
  Matrix y(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Matrix& pv = parts[i].value();
    std::copy(pv.data().begin(), pv.data().end(), y.data().begin() + offsets[i] * cols);
  }
  return g.record("concat_rows", std::move(y), parts,
                  [offsets = std::move(offsets)](const Matrix&, const Matrix& gout,
                                                 std::span<Matrix* const> pg) {
                    const std::size_t cols = gout.cols();
                    for (std::size_t i = 0; i < pg.size(); ++i) {
                      if (!pg[i]) continue;
                      Matrix& dst = *pg[i];
                      const double* src = gout.data().data() + offsets[i] * cols;
                      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
                    }
                  });
}

Var slice_rows(Var a, std::size_t first, std::size_t count) {
  Graph& g = graph_of("slice_rows", a);
  const Matrix& av = a.value();
  if (first + count > av.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") out of " + av.shape_string());
  }
  const std::size_t cols = av.cols();
  Matrix y(count, cols);
  std::copy_n(av.data().begin() + first * cols, count * cols, y.data().begin());
  return g.record("slice_rows", std::move(y), {a},
                  [first](const Matrix&, const Matrix& gout, std::span<Matrix* const> pg) {
                    double* dst = pg[0]->data().data() + first * gout.cols();
                    for (std::size_t k = 0; k < gout.size(); ++k) dst[k] += gout[k];
                  });
}

Var slice_cols(Var a, std::size_t first, std::size_t count) {
  Graph& g = graph_of("slice_cols", a);
  const Matrix& av = a.value();
  if (first + count > av.cols()) {
    throw ShapeError("slice_cols: cols [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") out of " + av.shape_string());
  }
  Matrix y(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) y(r, c) = av(r, first + c);
  return g.record("slice_cols", std::move(y), {a},
                  [first](const Matrix&, const Matrix& gout, std::span<Matrix* const> pg) {
                    for (std::size_t r = 0; r < gout.rows(); ++r)
                      for (std::size_t c = 0; c < gout.cols(); ++c)
                        (*pg[0])(r, first + c) += gout(r, c);
                  });
}

Var gather_cols(Var a, std::span<const std::size_t> columns) {
  Graph& g = graph_of("gather_cols", a);
  const Matrix& av = a.value();
  for (std::size_t c : columns) {
    if (c >= av.cols()) {
      throw ShapeError("gather_cols: column " + std::to_string(c) + " out of " +
                       av.shape_string());
    }
  }
  Matrix y(av.rows(), columns.size());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t j = 0; j < columns.size(); ++j) y(r, j) = av(r, columns[j]);
  std::vector<std::size_t> cols(columns.begin(), columns.end());
  return g.record("gather_cols", std::move(y), {a},
                  [cols = std::move(cols)](const Matrix&, const Matrix& gout,
                                           std::span<Matrix* const> pg) {
                    for (std::size_t r = 0; r < gout.rows(); ++r)
                      for (std::size_t j = 0; j < cols.size(); ++j)
                        (*pg[0])(r, cols[j]) += gout(r, j);
                  });
}

Var repeat_row(Var a, std::size_t rows) {
  Graph& g = graph_of("repeat_row", a);
  const Matrix& av = a.value();
  if (av.rows() != 1) throw ShapeError("repeat_row: expected a row, got " + av.shape_string());
  Matrix y(rows, av.cols());
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(av.data().begin(), av.data().end(), y.row_span(r).begin());
  return g.record("repeat_row", std::move(y), {a},
                  [](const Matrix&, const Matrix& gout, std::span<Matrix* const> pg) {
                    for (std::size_t r = 0; r < gout.rows(); ++r)
                      for (std::size_t c = 0; c < gout.cols(); ++c) (*pg[0])[c] += gout(r, c);
                  });
}

Var sum(Var a) {
  Graph& g = graph_of("sum", a);
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return g.record("sum", Matrix(1, 1, total), {a},
                  [](const Matrix&, const Matrix& gout, std::span<Matrix* const> pg) {
                    for (std::size_t i = 0; i < pg[0]->size(); ++i) (*pg[0])[i] += gout[0];
                  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0.0) throw ShapeError("mean: empty operand");
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  Graph& g = graph_of("row_sum", a);
  const Matrix& av = a.value();
  Matrix y(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) y[r] += av(r, c);
  return g.record("row_sum", std::move(y), {a},
                  [](const Matrix&, const Matrix& gout, std::span<Matrix* const> pg) {
                    Matrix& gx = *pg[0];
                    for (std::size_t r = 0; r < gx.rows(); ++r)
                      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += gout[r];
                  });
}

Var col_mean(Var a) {
  Graph& g = graph_of("col_mean", a);
  const Matrix& av = a.value();
  if (av.rows() == 0) throw ShapeError("col_mean: no rows");
  const double inv = 1.0 / static_cast<double>(av.rows());
  Matrix y(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) y[c] += av(r, c);
  for (std::size_t c = 0; c < av.cols(); ++c) y[c] *= inv;
  return g.record("col_mean", std::move(y), {a},
                  [inv](const Matrix&, const Matrix& gout, std::span<Matrix* const> pg) {
                    Matrix& gx = *pg[0];
                    for (std::size_t r = 0; r < gx.rows(); ++r)
                      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += gout[c] * inv;
                  });
}

Var smooth_l1(Var y, Var yhat, double beta) {
  Graph& g = same_graph("smooth_l1", y, yhat);
  require_same_shape("smooth_l1", y.value(), yhat.value());
  if (!(beta > 0.0)) throw std::invalid_argument("smooth_l1: beta must be positive");
  const Matrix& yv = y.value();
  const Matrix& hv = yhat.value();
  Matrix out(yv.rows(), yv.cols());
  Matrix slope(yv.rows(), yv.cols());
  for (std::size_t i = 0; i < yv.size(); ++i) {
    const double d = yv[i] - hv[i];
    const double ad = std::abs(d);
    if (ad < beta) {
      out[i] = 0.5 * d * d / beta;
      slope[i] = d / beta;
    } else {
      out[i] = ad - 0.5 * beta;
      slope[i] = d > 0.0 ? 1.0 : -1.0;
    }
  }
  return g.record("smooth_l1", std::move(out), {y, yhat},
                  [slope = std::move(slope)](const Matrix&, const Matrix& gout,
                                             std::span<Matrix* const> pg) {
                    for (std::size_t i = 0; i < gout.size(); ++i) {
                      if (pg[0]) (*pg[0])[i] += gout[i] * slope[i];
                      if (pg[1]) (*pg[1])[i] -= gout[i] * slope[i];
                    }
                  });
}

Var dropout(Var a, double p, std::uint64_t seed) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw std::invalid_argument("dropout: probability must be < 1");
  Graph& g = graph_of("dropout", a);
  const Matrix& av = a.value();
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(av.rows(), av.cols());
  const double s = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? s : 0.0;
  Matrix y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
  return g.record("dropout", std::move(y), {a},
                  [mask = std::move(mask)](const Matrix&, const Matrix& gout,
                                           std::span<Matrix* const> pg) {
                    for (std::size_t i = 0; i < gout.size(); ++i) (*pg[0])[i] += gout[i] * mask[i];
                  });
}

}  // namespace ddgen::ad
