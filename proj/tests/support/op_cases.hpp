// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "support/gradcheck.hpp"

namespace echomoe::testkit {

struct OpCase {
  std::string name;
  OpBuilder build;
  std::vector<Tensor> inputs;
};

/// One gradient case per differentiable tape op, inputs of magnitude <= 3.
inline std::vector<OpCase> op_cases(SplitMix64& rng) {
  auto r = [&](Shape s) { return random_tensor(std::move(s), rng); };
  static const std::vector<std::size_t> rows{2, 0, 2};
  static const std::vector<std::size_t> cols{1, 3, 0, 0, 2, 1};
  static const std::vector<std::size_t> targets{0, 4, 2};
  std::vector<OpCase> c;
  c.push_back({"matmul", [](auto v) { return ops::matmul(v[0], v[1]); }, {r({3, 4}), r({4, 2})}});
  c.push_back({"linear", [](auto v) { return ops::linear(v[0], v[1]); }, {r({3, 4}), r({5, 4})}});
  c.push_back({"transpose", [](auto v) { return ops::transpose(v[0]); }, {r({3, 4})}});
  c.push_back({"add", [](auto v) { return ops::add(v[0], v[1]); }, {r({2, 3}), r({2, 3})}});
  c.push_back({"sub", [](auto v) { return ops::sub(v[0], v[1]); }, {r({2, 3}), r({2, 3})}});
  c.push_back({"mul", [](auto v) { return ops::mul(v[0], v[1]); }, {r({2, 3}), r({2, 3})}});
  c.push_back(
      {"add_rowvec", [](auto v) { return ops::add_rowvec(v[0], v[1]); }, {r({3, 4}), r({4})}});
  c.push_back({"scale", [](auto v) { return ops::scale(v[0], -1.7); }, {r({3, 2})}});
  c.push_back({"scale_by", [](auto v) { return ops::scale_by(v[0], v[1]); }, {r({3, 2}), r({1})}});
  c.push_back({"rsub", [](auto v) { return ops::rsub(1.0, v[0]); }, {r({1})}});
  c.push_back(
      {"row_scale", [](auto v) { return ops::row_scale(v[0], v[1]); }, {r({3, 4}), r({3, 1})}});
  c.push_back({"sigmoid", [](auto v) { return ops::sigmoid(v[0]); }, {r({2, 5})}});
  c.push_back({"silu", [](auto v) { return ops::silu(v[0]); }, {r({2, 5})}});
  c.push_back({"softmax0", [](auto v) { return ops::softmax(v[0], 0); }, {r({3, 4})}});
  c.push_back({"softmax1", [](auto v) { return ops::softmax(v[0], 1); }, {r({3, 4})}});
  c.push_back({"causal_softmax", [](auto v) { return ops::causal_softmax(v[0]); }, {r({4, 4})}});
  c.push_back({"layer_norm",
               [](auto v) { return ops::layer_norm(v[0], v[1], v[2], 1e-5); },
               {r({3, 6}), r({6}), r({6})}});
  c.push_back({"gather_rows", [](auto v) { return ops::gather_rows(v[0], rows); }, {r({3, 4})}});
  c.push_back(
      {"scatter_rows", [](auto v) { return ops::scatter_rows(v[0], rows, 4); }, {r({3, 2})}});
  c.push_back(
      {"gather_elements", [](auto v) { return ops::gather_elements(v[0], cols, 2); }, {r({3, 4})}});
  c.push_back({"slice_cols", [](auto v) { return ops::slice_cols(v[0], 1, 2); }, {r({3, 4})}});
  c.push_back({"concat_cols", [](auto v) { return ops::concat_cols(v); }, {r({2, 3}), r({2, 1})}});
  c.push_back({"concat_rows", [](auto v) { return ops::concat_rows(v); }, {r({2, 3}), r({1, 3})}});
  c.push_back({"reshape", [](auto v) { return ops::reshape(v[0], {6}); }, {r({2, 3})}});
  c.push_back({"sum", [](auto v) { return ops::sum(v[0]); }, {r({2, 3})}});
  c.push_back({"mean_rows", [](auto v) { return ops::mean_rows(v[0]); }, {r({4, 3})}});
  c.push_back(
      {"cross_entropy", [](auto v) { return ops::cross_entropy(v[0], targets); }, {r({3, 5})}});
  return c;
}

}  // namespace echomoe::testkit
