// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/moe/routing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "echomoe/errors.hpp"
#include "echomoe/numerics/ops.hpp"

namespace echomoe::moe {

RoutingDecision route_topk(const Tensor& logits, std::size_t k) {
  if (logits.rank() != 2) {
    throw DimensionError("route_topk: logits must be tokens×E, got " + to_string(logits.shape()));
  }
  const std::size_t n = logits.rows(), e = logits.cols();
  if (k == 0 || k > e) {
    throw ConfigError("route_topk: top-k " + std::to_string(k) + " invalid for " +
                      std::to_string(e) + " experts");
  }
  if (!logits.all_finite()) throw DataError("route_topk: non-finite router logits");

  RoutingDecision d;
  d.tokens = n;
  d.experts = e;
  d.k = k;
  d.selected.resize(n * k);
  Tensor chosen({n, k});
  std::vector<std::size_t> order(e);
  for (std::size_t t = 0; t < n; ++t) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto row = logits.row(t);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    for (std::size_t s = 0; s < k; ++s) {
      d.selected[t * k + s] = order[s];
      chosen.at(t, s) = row[order[s]];
    }
  }
  Tensor gates = n ? softmax(chosen, 1) : chosen;
  d.gates.assign(gates.data().begin(), gates.data().end());
  d.probs = n ? softmax(logits, 1) : Tensor({0, e});
  return d;
}

RoutingDecision concat(std::span<const RoutingDecision> parts) {
  if (parts.empty()) throw ContractError("concat: no routing decisions");
  RoutingDecision out;
  out.experts = parts[0].experts;
  out.k = parts[0].k;
  std::vector<double> probs;
  for (const auto& p : parts) {
    if (p.experts != out.experts || p.k != out.k) {
      throw ConfigError("concat: routing decisions disagree on E or k");
    }
    out.tokens += p.tokens;
    out.selected.insert(out.selected.end(), p.selected.begin(), p.selected.end());
    out.gates.insert(out.gates.end(), p.gates.begin(), p.gates.end());
    probs.insert(probs.end(), p.probs.data().begin(), p.probs.data().end());
  }
  out.probs = Tensor({out.tokens, out.experts}, std::move(probs));
  return out;
}

DispatchStats dispatch_stats(const RoutingDecision& d, std::span<const Modality> modality) {
  if (d.tokens == 0) throw ContractError("dispatch_stats: empty batch");
  if (!modality.empty() && modality.size() != d.tokens) {
    throw DimensionError("dispatch_stats: " + std::to_string(modality.size()) +
                         " modality tags for " + std::to_string(d.tokens) + " tokens");
  }
  DispatchStats s;
  s.experts = d.experts;
  s.k = d.k;
  s.tokens = d.tokens;
  s.dispatch.assign(d.experts, 0.0);
  s.gate_mean.assign(d.experts, 0.0);
  s.dispatch_image.assign(d.experts, 0.0);
  s.dispatch_text.assign(d.experts, 0.0);

  for (std::size_t t = 0; t < d.tokens; ++t) {
    const bool image = !modality.empty() && modality[t] == Modality::Image;
    (image ? s.image_tokens : s.text_tokens) += 1;
    for (std::size_t slot = 0; slot < d.k; ++slot) {
      const std::size_t e = d.expert(t, slot);
      s.dispatch[e] += 1.0;
      (image ? s.dispatch_image : s.dispatch_text)[e] += 1.0;
    }
    for (std::size_t e = 0; e < d.experts; ++e) s.gate_mean[e] += d.probs.at(t, e);
  }
  const double inv = 1.0 / static_cast<double>(d.tokens);
  for (std::size_t e = 0; e < d.experts; ++e) {
    s.dispatch[e] *= inv;
    s.gate_mean[e] *= inv;
    if (s.image_tokens) s.dispatch_image[e] /= static_cast<double>(s.image_tokens);
    if (s.text_tokens) s.dispatch_text[e] /= static_cast<double>(s.text_tokens);
  }
  return s;
}

double balance_loss(const DispatchStats& stats) {
  double total = 0.0;
  for (std::size_t e = 0; e < stats.experts; ++e) total += stats.dispatch[e] * stats.gate_mean[e];
  return total;
}

Var balance_loss(Var probs, std::span<const double> dispatch) {
  Var g = ops::mean_rows(probs);
  if (g.value().size() != dispatch.size()) {
    throw DimensionError("balance_loss: " + std::to_string(dispatch.size()) +
                         " dispatch ratios for " + to_string(probs.shape()) + " probabilities");
  }
  Tensor f({dispatch.size()}, std::vector<double>(dispatch.begin(), dispatch.end()));
  return ops::sum(ops::mul_const(g, f));
}

double coefficient_of_variation(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (mean == 0.0) return 0.0;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return std::sqrt(var / n) / mean;
}

}  // namespace echomoe::moe
