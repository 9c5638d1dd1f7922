// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "echomoe/numerics/tensor.hpp"

namespace echomoe {

using ScalarFn = std::function<double(const Tensor&)>;

/// Central-difference gradient of `f` at `x`:
/// (f(x + eps·e_i) - f(x - eps·e_i)) / 2eps for every coordinate i.
/// eps must lie in [1e-7, 1e-3].
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double eps = 1e-5);

/// max_i |a_i - b_i| / max(|a|_inf, |b|_inf, floor). The floor keeps the
/// measure meaningful when both gradients vanish.
double relative_error(const Tensor& analytic, const Tensor& numeric,
                      double floor = 1e-8);

}  // namespace echomoe
