// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/moe/ffn.hpp"

#include <cmath>

#include "echomoe/errors.hpp"
#include "echomoe/numerics/init.hpp"
#include "echomoe/numerics/ops.hpp"

namespace echomoe::moe {
FfnWeights add_ffn(ParameterStore& store, const std::string& prefix, std::size_t d_model,
                   std::size_t hidden, SplitMix64& rng, bool frozen) {
  if (d_model == 0 || hidden == 0) throw ConfigError(prefix + ": FFN widths must be positive");
  FfnWeights w;
  w.w_in = store.add(prefix + ".w_in",
                     gaussian_tensor({hidden, d_model}, 1.0 / std::sqrt(double(d_model)), rng), frozen);
  w.b_in = store.add(prefix + ".b_in", Tensor({hidden}), frozen);
  w.w_out = store.add(prefix + ".w_out",
                      gaussian_tensor({d_model, hidden}, 1.0 / std::sqrt(double(hidden)), rng), frozen);
  w.b_out = store.add(prefix + ".b_out", Tensor({d_model}), frozen);
  return w;
}

Var ffn_forward(Tape& tape, const ParameterStore& store, const FfnWeights& w, Var x) {
  Var h = ops::add_rowvec(ops::linear(x, tape.parameter(store, w.w_in)),
                          tape.parameter(store, w.b_in));
  h = ops::silu(h);
  return ops::add_rowvec(ops::linear(h, tape.parameter(store, w.w_out)),
                         tape.parameter(store, w.b_out));
}

void make_identity_ffn(ParameterStore& store, const FfnWeights& w) {
  const std::size_t d = store.value(w.w_in).cols();
  if (store.value(w.w_in).rows() != 2 * d) {
    throw ConfigError("identity FFN needs hidden width 2*D");
  }
  Tensor w_in({2 * d, d}), w_out({d, 2 * d});
  for (std::size_t i = 0; i < d; ++i) {
    w_in.at(i, i) = 1.0;
    w_in.at(d + i, i) = -1.0;
    w_out.at(i, i) = 1.0;
    w_out.at(i, d + i) = -1.0;
  }
  store.at(w.w_in).value = std::move(w_in);
  store.at(w.w_out).value = std::move(w_out);
  store.at(w.b_in).value = Tensor({2 * d});
  store.at(w.b_out).value = Tensor({d});
}

}  // namespace echomoe::moe
