// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/numerics/finite_diff.hpp"

#include <algorithm>
#include <cmath>

#include "echomoe/errors.hpp"

namespace echomoe {

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw ContractError("finite_diff_grad: eps must lie in [1e-7, 1e-3]");
  }
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
  if (analytic.shape() != numeric.shape()) {
    throw DimensionError("relative_error: shape mismatch " +
                         to_string(analytic.shape()) + " vs " +
                         to_string(numeric.shape()));
  }
  double scale = floor;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return max_abs_diff(analytic, numeric) / scale;
}

}  // namespace echomoe
