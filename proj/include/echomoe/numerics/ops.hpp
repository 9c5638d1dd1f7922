// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "echomoe/numerics/tape.hpp"

// Differentiable primitives. Every op records itself on the tape of its first
// operand. Broadcasting is limited to a trailing-dimension vector (add_rowvec)
// and the explicit scalar/row-scale ops below.
namespace echomoe::ops {

Var matmul(Var a, Var b);
/// x · Wᵀ with W stored out×in.
Var linear(Var x, Var w);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Elementwise product with a constant tensor of the same shape.
Var mul_const(Var a, const Tensor& c);
/// x[n×d] + b[d]
Var add_rowvec(Var x, Var b);
Var scale(Var a, double s);
/// a * s where s holds a single value.
Var scale_by(Var a, Var s);
/// c - a
Var rsub(double c, Var a);
/// x[n×d] with row r multiplied by s[r] (s is n×1 or n).
Var row_scale(Var x, Var s);

Var sigmoid(Var x);
/// x · sigmoid(x)
Var silu(Var x);

Var softmax(Var x, std::size_t axis);
/// Row softmax of a square score matrix with entries above the diagonal
/// masked out (probability exactly zero).
Var causal_softmax(Var scores);
Var layer_norm(Var x, Var gamma, Var beta, double eps);

Var gather_rows(Var x, std::span<const std::size_t> rows);
/// Places row i of x at output row rows[i] of an n_out-row zero matrix.
Var scatter_rows(Var x, std::span<const std::size_t> rows, std::size_t n_out);
/// out[i][j] = x[i][cols[i*k + j]] for an n×k index table.
Var gather_elements(Var x, std::span<const std::size_t> cols, std::size_t k);
Var slice_cols(Var x, std::size_t start, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var reshape(Var x, Shape shape);

Var sum(Var x);
/// Column means of a matrix, shape [cols].
Var mean_rows(Var x);

/// Mean over rows of -log softmax(logits)[target].
Var cross_entropy(Var logits, std::span<const std::size_t> targets);

}  // namespace echomoe::ops
