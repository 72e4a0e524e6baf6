#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ddgen/ad/graph.hpp"

// Differentiable ops over 2-D tensors. Every op records itself on the graph
// owning its operands and throws ShapeError naming the op on mismatch.
// Broadcasting is limited to the explicit row/column helpers below.
namespace ddgen::ad {

// elementwise, same shape
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

/// a (r x c) + bias (1 x c) on every row.
Var add_row(Var a, Var bias);
/// a (r x c) - col (r x 1) on every column.
Var sub_col(Var a, Var col);
/// a (r x c) * col (r x 1), scaling each row.
Var mul_col(Var a, Var col);
/// Fixed per-column affine map: out[:, j] = a[:, j] * scale[j] + shift[j].
Var affine_cols(Var a, std::span<const double> scale, std::span<const double> shift);

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

/// Row-wise softmax with row-max subtraction. When `allowed` is non-null it
/// must match the shape of `a`; entries with allowed == 0 get probability 0.
/// Every row needs at least one allowed entry.
Var softmax_rows(Var a, const Matrix* allowed = nullptr);

/// Row-wise layer normalization with learned gain/bias rows (1 x c).
Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);

Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
Var cos(Var a);
Var sin(Var a);

Var concat_cols(Var a, Var b);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t first, std::size_t count);
Var slice_cols(Var a, std::size_t first, std::size_t count);
Var gather_cols(Var a, std::span<const std::size_t> columns);
/// 1 x c -> r x c
Var repeat_row(Var a, std::size_t rows);

/// Sum of all entries (1 x 1).
Var sum(Var a);
/// Mean of all entries (1 x 1).
Var mean(Var a);
/// r x c -> r x 1
Var row_sum(Var a);
/// r x c -> 1 x c
Var col_mean(Var a);

/// Elementwise SmoothL1 between y and yhat with threshold beta.
Var smooth_l1(Var y, Var yhat, double beta);

/// Inverted dropout; identity when p == 0. The mask is drawn from `seed`.
Var dropout(Var a, double p, std::uint64_t seed);

/// x * W + b with W (in x out) and b (1 x out).
inline Var affine(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

}  // namespace ddgen::ad
