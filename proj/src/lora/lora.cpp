// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/lora/lora.hpp"

#include <algorithm>

#include "echomoe/errors.hpp"
#include "echomoe/numerics/init.hpp"
#include "echomoe/numerics/ops.hpp"

namespace echomoe::lora {

LoraAdapter attach_adapter(ParameterStore& store, const std::string& site, ParamId base,
                           const LoraConfig& config, SplitMix64& rng) {
  const Tensor& w0 = store.value(base);
  if (w0.rank() != 2) throw ConfigError("LoRA site " + site + " is not a matrix");
  const std::size_t d = w0.rows(), d_in = w0.cols();
  if (config.rank == 0 || config.rank > std::min(d, d_in)) {
    throw ConfigError("LoRA rank " + std::to_string(config.rank) + " invalid for site " + site +
                      " of shape " + to_string(w0.shape()));
  }
  if (config.dropout < 0.0 || config.dropout >= 1.0) {
    throw ConfigError("LoRA dropout must lie in [0, 1)");
  }
  LoraAdapter adapter;
  adapter.base = base;
  adapter.rank = config.rank;
  adapter.alpha = config.alpha;
  adapter.dropout = config.dropout;
  adapter.a = store.add(std::string(kPrefix) + site + ".A",
                        gaussian_tensor({d, config.rank}, 0.02, rng));
  adapter.b = store.add(std::string(kPrefix) + site + ".B", Tensor({d_in, config.rank}));
  return adapter;
}

Var lora_apply(Tape& tape, const ParameterStore& store, ParamId base, const LoraAdapter* adapter,
               Var x, bool training, SplitMix64* rng) {
  Var y = ops::linear(x, tape.parameter(store, base));
  if (!adapter) return y;
  Var in = x;
  if (training && adapter->dropout > 0.0) {
    if (!rng) throw ContractError("lora_apply: dropout in training mode needs an RNG");
    const double keep = 1.0 - adapter->dropout;
    Tensor mask(x.shape());
    for (double& m : mask.data()) m = rng->uniform() < keep ? 1.0 / keep : 0.0;
    in = ops::mul_const(x, mask);
  }
  Var low = ops::matmul(in, tape.parameter(store, adapter->b));
  Var delta = ops::linear(low, tape.parameter(store, adapter->a));
  return ops::add(y, ops::scale(delta, adapter->scale()));
}

Tensor lora_delta(const Tensor& a, const Tensor& b, double scale) {
  return echomoe::scale(matmul_nt(a, b), scale);
}

Tensor lora_merge(const Tensor& w0, const LoraAdapter& adapter, const ParameterStore& store) {
  return add(w0, lora_delta(store.value(adapter.a), store.value(adapter.b), adapter.scale()));
}

std::size_t adapter_parameter_count(const LoraAdapter& adapter, const ParameterStore& store) {
  return store.value(adapter.a).size() + store.value(adapter.b).size();
}

}  // namespace echomoe::lora
