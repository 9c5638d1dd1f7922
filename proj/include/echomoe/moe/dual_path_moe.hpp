// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "echomoe/moe/ffn.hpp"
#include "echomoe/moe/routing.hpp"

namespace echomoe::moe {

struct MoeShape {
  std::size_t d_model = 0;
  std::size_t static_hidden = 0;
  std::size_t shared_hidden = 0;
  std::size_t expert_hidden = 0;
  std::size_t experts = 4;
  std::size_t top_k = 2;

  void validate() const;
};

/// Parameters of one Dual-path MoE layer:
///
///   Y = α·FFN(X) + (1 − α)·(λ·S(X) + Σ_{i ∈ TopK} g_i·E_i(X))
///
/// FFN is the frozen static copy of the base block's feed-forward, S the
/// shared expert and E_i the routed experts. α = sigmoid(alpha_raw) and
/// λ = sigmoid(lambda_raw) are per-layer scalars.
struct DualPathMoEParams {
  FfnWeights static_ffn;
  FfnWeights shared;
  std::vector<FfnWeights> experts;
  ParamId router = 0;  // D×E
  ParamId alpha_raw = 0;
  ParamId lambda_raw = 0;
  std::size_t top_k = 2;
};

/// Registers a layer under `prefix`. The static FFN stands in for the base
/// block's feed-forward and is created frozen.
DualPathMoEParams add_dual_path_moe(ParameterStore& store, const std::string& prefix,
                                    const MoeShape& shape, SplitMix64& rng);

/// Pins α and/or λ to fixed values, bypassing the learned scalars.
struct MixOverride {
  std::optional<double> alpha;
  std::optional<double> lambda;
};

struct MoeOutput {
  Var y;
  RoutingDecision routing;
  /// tokens×E full softmax over router logits, on the tape.
  Var probs;
  DispatchStats stats;
};

MoeOutput moe_forward(Tape& tape, const ParameterStore& store, const DualPathMoEParams& params,
                      Var x, std::span<const Modality> modality = {},
                      const MixOverride& mix = {});

double alpha_value(const ParameterStore& store, const DualPathMoEParams& params);
double lambda_value(const ParameterStore& store, const DualPathMoEParams& params);

}  // namespace echomoe::moe
