// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "echomoe/numerics/rng.hpp"
#include "echomoe/numerics/tensor.hpp"

namespace echomoe {

inline Tensor gaussian_tensor(Shape shape, double std, SplitMix64& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = std * rng.normal();
  return t;
}

}  // namespace echomoe
