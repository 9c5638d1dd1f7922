// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "echomoe/textpipe/records.hpp"
#include "echomoe/textpipe/text.hpp"

namespace echomoe::textpipe {

/// Placed between question and answer tokens. normalize() strips
/// punctuation, so it never collides with a real token.
inline constexpr const char* kSeparatorToken = "<sep>";

/// normalize(question) ⊕ <sep> ⊕ normalize(answer)
Tokens similarity_tokens(const InstructionRecord& record);

struct DedupThresholds {
  double rouge = 0.7;  // reject when ROUGE-L > rouge
  int hamming = 3;     // reject when Hamming ≤ hamming
};

struct Rejection {
  std::string id;
  std::string gate;  // "simhash" or "rouge_l"
  std::string against_id;
  double score = 0.0;
};

struct DedupResult {
  std::vector<InstructionRecord> accepted;
  std::vector<Rejection> rejected;
};

/// Accepted records seen so far: their similarity tokens and signatures.
class DedupIndex {
 public:
  explicit DedupIndex(DedupThresholds thresholds = {}) : thresholds_(thresholds) {}

  /// Checks `record` against everything accepted so far; appends it to the
  /// index when no gate fires. The Simhash gate runs first and reports the
  /// closest signature; otherwise the ROUGE-L gate reports the most similar
  /// record. Ties go to the earliest accepted record.
  std::optional<Rejection> offer(const InstructionRecord& record);

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::uint64_t>& signatures() const { return signatures_; }

 private:
  DedupThresholds thresholds_;
  std::vector<std::string> ids_;
  std::vector<Tokens> tokens_;
  std::vector<std::uint64_t> signatures_;
};

/// Streams records through a DedupIndex in order. Duplicate ids raise
/// DataError.
DedupResult dedup(std::span<const InstructionRecord> stream, DedupThresholds thresholds = {});

nlohmann::json to_json(const Rejection& r);

struct SampledBatch {
  std::size_t batch_index = 0;
  std::vector<InstructionRecord> records;
};

/// Cuts `accepted` into consecutive batches of batch_size (last one may be
/// short) and draws ceil(batch_rate · batches) of them uniformly without
/// replacement. Returned in batch order.
std::vector<SampledBatch> sample_validation(std::span<const InstructionRecord> accepted,
                                            std::size_t batch_size, double batch_rate,
                                            std::uint64_t seed);

}  // namespace echomoe::textpipe
