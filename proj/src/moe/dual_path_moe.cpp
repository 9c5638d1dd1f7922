// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/moe/dual_path_moe.hpp"

#include <cmath>

#include "echomoe/errors.hpp"
#include "echomoe/numerics/init.hpp"
#include "echomoe/numerics/ops.hpp"

namespace echomoe::moe {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void MoeShape::validate() const {
  if (d_model == 0 || static_hidden == 0 || shared_hidden == 0 || expert_hidden == 0) {
    throw ConfigError("MoE widths must be positive");
  }
  if (experts == 0) throw ConfigError("MoE needs at least one routed expert");
  if (top_k == 0 || top_k > experts) {
    throw ConfigError("top-k " + std::to_string(top_k) + " invalid for " +
                      std::to_string(experts) + " experts");
  }
}

DualPathMoEParams add_dual_path_moe(ParameterStore& store, const std::string& prefix,
                                    const MoeShape& shape, SplitMix64& rng) {
  shape.validate();
  DualPathMoEParams p;
  p.top_k = shape.top_k;
  p.static_ffn = add_ffn(store, prefix + ".static", shape.d_model, shape.static_hidden, rng, true);
  p.shared = add_ffn(store, prefix + ".shared", shape.d_model, shape.shared_hidden, rng, false);
  for (std::size_t e = 0; e < shape.experts; ++e) {
    p.experts.push_back(add_ffn(store, prefix + ".experts." + std::to_string(e), shape.d_model,
                                shape.expert_hidden, rng, false));
  }
  p.router = store.add(prefix + ".router",
                       gaussian_tensor({shape.d_model, shape.experts}, 0.02, rng));
  p.alpha_raw = store.add(prefix + ".alpha_raw", Tensor({1}));
  p.lambda_raw = store.add(prefix + ".lambda_raw", Tensor({1}));
  return p;
}

MoeOutput moe_forward(Tape& tape, const ParameterStore& store, const DualPathMoEParams& params,
                      Var x, std::span<const Modality> modality, const MixOverride& mix) {
  if (x.shape().size() != 2) {
    throw DimensionError("moe_forward: expected tokens×D input, got " + to_string(x.shape()));
  }
  const std::size_t d = store.value(params.router).rows();
  if (x.shape()[1] != d) {
    throw DimensionError("moe_forward: input " + to_string(x.shape()) +
                         " does not match model width " + std::to_string(d));
  }
  const std::size_t n = x.shape()[0];
  const std::size_t e_count = params.experts.size();
  const std::size_t k = params.top_k;

  Var logits = ops::matmul(x, tape.parameter(store, params.router));
  MoeOutput out;
  out.routing = route_topk(logits.value(), k);
  out.probs = ops::softmax(logits, 1);
  Var gates = ops::softmax(ops::gather_elements(logits, out.routing.selected, k), 1);

  // Routed experts see only the tokens whose top-k set contains them.
  Var routed = tape.constant(Tensor({n, d}));
  for (std::size_t e = 0; e < e_count; ++e) {
    std::vector<std::size_t> tokens, slots;
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t s = 0; s < k; ++s) {
        if (out.routing.expert(t, s) == e) {
          tokens.push_back(t);
          slots.push_back(s);
        }
      }
    }
    if (tokens.empty()) continue;
    Var g = ops::gather_elements(ops::gather_rows(gates, tokens), slots, 1);
    Var y = ffn_forward(tape, store, params.experts[e], ops::gather_rows(x, tokens));
    routed = ops::add(routed, ops::scatter_rows(ops::row_scale(y, g), tokens, n));
  }

  Var alpha = mix.alpha ? tape.constant(Tensor::scalar(*mix.alpha))
                        : ops::sigmoid(tape.parameter(store, params.alpha_raw));
  Var lambda = mix.lambda ? tape.constant(Tensor::scalar(*mix.lambda))
                          : ops::sigmoid(tape.parameter(store, params.lambda_raw));

  Var fixed = ffn_forward(tape, store, params.static_ffn, x);
  Var shared = ffn_forward(tape, store, params.shared, x);
  Var adaptive = ops::add(ops::scale_by(shared, lambda), routed);
  out.y = ops::add(ops::scale_by(fixed, alpha), ops::scale_by(adaptive, ops::rsub(1.0, alpha)));
  if (n > 0) out.stats = dispatch_stats(out.routing, modality);
  return out;
}

double alpha_value(const ParameterStore& store, const DualPathMoEParams& params) {
  return sigmoid(store.value(params.alpha_raw)[0]);
}

double lambda_value(const ParameterStore& store, const DualPathMoEParams& params) {
  return sigmoid(store.value(params.lambda_raw)[0]);
}

}  // namespace echomoe::moe
