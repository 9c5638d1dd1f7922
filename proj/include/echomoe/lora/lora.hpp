// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include "echomoe/numerics/parameters.hpp"
#include "echomoe/numerics/rng.hpp"
#include "echomoe/numerics/tape.hpp"

namespace echomoe::lora {

struct LoraConfig {
  std::size_t rank = 8;
  double alpha = 16.0;
  double dropout = 0.05;
};

/// Low-rank update ΔW = s·A·Bᵀ for a base weight W0 of shape d×d' (out×in).
/// A is d×r, B is d'×r and s = alpha / r.
struct LoraAdapter {
  ParamId a = 0;
  ParamId b = 0;
  ParamId base = 0;
  std::size_t rank = 0;
  double alpha = 0.0;
  double dropout = 0.0;

  double scale() const { return alpha / static_cast<double>(rank); }
};

/// Namespace prefix of every adapter parameter.
inline constexpr const char* kPrefix = "lora.";

/// Registers "lora.<site>.A" (Gaussian, std 0.02) and "lora.<site>.B" (zero)
/// for the base weight `base`. Throws ConfigError if the rank exceeds
/// min(d, d').
LoraAdapter attach_adapter(ParameterStore& store, const std::string& site, ParamId base,
                           const LoraConfig& config, SplitMix64& rng);

/// y = x·W0ᵀ + s·(drop(x)·B)·Aᵀ. ΔW is never materialised. Dropout applies to
/// the adapter input only, and only when `training` is set (then `rng` is
/// required if dropout > 0). A null adapter yields the plain projection.
Var lora_apply(Tape& tape, const ParameterStore& store, ParamId base, const LoraAdapter* adapter,
               Var x, bool training = false, SplitMix64* rng = nullptr);

/// s·A·Bᵀ
Tensor lora_delta(const Tensor& a, const Tensor& b, double scale);

/// W0 + s·A·Bᵀ
Tensor lora_merge(const Tensor& w0, const LoraAdapter& adapter, const ParameterStore& store);

/// r·(d + d')
std::size_t adapter_parameter_count(const LoraAdapter& adapter, const ParameterStore& store);

}  // namespace echomoe::lora
