// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "echomoe/numerics/tape.hpp"
#include "echomoe/numerics/tensor.hpp"

namespace echomoe::moe {

enum class Modality : std::uint8_t { Image, Text };

/// Top-k routing for a batch of tokens.
struct RoutingDecision {
  std::size_t tokens = 0;
  std::size_t experts = 0;
  std::size_t k = 0;
  /// tokens×k expert indices, highest logit first, ties to the lower index.
  std::vector<std::size_t> selected;
  /// tokens×k softmax over the selected logits only.
  std::vector<double> gates;
  /// tokens×E softmax over all logits.
  Tensor probs;

  std::size_t expert(std::size_t token, std::size_t slot) const { return selected[token * k + slot]; }
  double gate(std::size_t token, std::size_t slot) const { return gates[token * k + slot]; }
};

RoutingDecision route_topk(const Tensor& logits, std::size_t k);

/// Stacks decisions over disjoint token sets (e.g. several sequences of one
/// training step) into one batch.
RoutingDecision concat(std::span<const RoutingDecision> parts);

/// Per-expert dispatch ratio F and mean gate probability G over a batch,
/// with F split by token modality.
struct DispatchStats {
  std::size_t experts = 0;
  std::size_t k = 0;
  std::size_t tokens = 0;
  std::size_t image_tokens = 0;
  std::size_t text_tokens = 0;
  std::vector<double> dispatch;
  std::vector<double> gate_mean;
  std::vector<double> dispatch_image;
  std::vector<double> dispatch_text;
};

/// `modality` has one tag per token; an empty span tags every token as text.
DispatchStats dispatch_stats(const RoutingDecision& decision,
                             std::span<const Modality> modality = {});

/// Σ_e F_e · G_e.
double balance_loss(const DispatchStats& stats);

/// Differentiable Σ_e F_e · mean_t probs[t][e]. F is a constant: the gradient
/// flows through the gate probabilities only.
Var balance_loss(Var probs, std::span<const double> dispatch);

/// Coefficient of variation (population std / mean) of a dispatch vector.
double coefficient_of_variation(std::span<const double> values);

}  // namespace echomoe::moe
