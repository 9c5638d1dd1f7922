// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/textpipe/dedup.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "echomoe/errors.hpp"
#include "echomoe/numerics/rng.hpp"

namespace echomoe::textpipe {

Tokens similarity_tokens(const InstructionRecord& record) {
  Tokens t = normalize(record.question);
  t.push_back(kSeparatorToken);
  Tokens a = normalize(record.answer);
  t.insert(t.end(), a.begin(), a.end());
  return t;
}

std::optional<Rejection> DedupIndex::offer(const InstructionRecord& record) {
  Tokens tokens = similarity_tokens(record);
  const std::uint64_t sig = simhash64(tokens);

  int best_distance = 65;
  std::size_t best = 0;
  for (std::size_t i = 0; i < signatures_.size(); ++i) {
    const int d = hamming(sig, signatures_[i]);
    if (d < best_distance) {
      best_distance = d;
      best = i;
    }
  }
  if (!ids_.empty() && best_distance <= thresholds_.hamming) {
    return Rejection{record.id, "simhash", ids_[best], static_cast<double>(best_distance)};
  }

  double best_rouge = -1.0;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    // LCS ≤ min length bounds the F1 by 2·min/(|a|+|b|).
    const double n = static_cast<double>(tokens.size()), m = static_cast<double>(tokens_[i].size());
    if (2.0 * std::min(n, m) / (n + m) <= std::max(best_rouge, thresholds_.rouge)) continue;
    const double r = rouge_l_sim(tokens, tokens_[i]);
    if (r > best_rouge) {
      best_rouge = r;
      best = i;
    }
  }
  if (best_rouge > thresholds_.rouge) {
    return Rejection{record.id, "rouge_l", ids_[best], best_rouge};
  }

  ids_.push_back(record.id);
  tokens_.push_back(std::move(tokens));
  signatures_.push_back(sig);
  return std::nullopt;
}

DedupResult dedup(std::span<const InstructionRecord> stream, DedupThresholds thresholds) {
  DedupResult out;
  DedupIndex index(thresholds);
  std::unordered_set<std::string> seen;
  for (const auto& r : stream) {
    if (!seen.insert(r.id).second) throw DataError("duplicate record id '" + r.id + "'");
    if (auto rej = index.offer(r)) {
      out.rejected.push_back(std::move(*rej));
    } else {
      out.accepted.push_back(r);
    }
  }
  return out;
}

nlohmann::json to_json(const Rejection& r) {
  return {{"id", r.id}, {"gate", r.gate}, {"against_id", r.against_id}, {"score", r.score}};
}

std::vector<SampledBatch> sample_validation(std::span<const InstructionRecord> accepted,
                                            std::size_t batch_size, double batch_rate,
                                            std::uint64_t seed) {
  if (accepted.empty()) throw ContractError("sample_validation: empty corpus");
  if (batch_size == 0) throw ConfigError("sample_validation: batch size must be positive");
  if (!(batch_rate > 0.0 && batch_rate <= 1.0)) {
    throw ConfigError("sample_validation: batch rate must lie in (0, 1]");
  }
  const std::size_t batches = (accepted.size() + batch_size - 1) / batch_size;
  // The small slack keeps exact products such as 0.05·200 from rounding up.
  const auto want = std::min(
      batches,
      static_cast<std::size_t>(std::ceil(batch_rate * static_cast<double>(batches) - 1e-9)));

  std::vector<std::size_t> order(batches);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng = SplitMix64(seed).fork("validation");
  for (std::size_t i = 0; i < want; ++i) {
    std::swap(order[i], order[i + rng.below(batches - i)]);
  }
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(want));
  std::sort(chosen.begin(), chosen.end());

  std::vector<SampledBatch> out;
  for (std::size_t b : chosen) {
    SampledBatch s{b, {}};
    const std::size_t end = std::min(accepted.size(), (b + 1) * batch_size);
    for (std::size_t i = b * batch_size; i < end; ++i) s.records.push_back(accepted[i]);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace echomoe::textpipe
