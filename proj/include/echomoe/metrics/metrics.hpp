// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "echomoe/textpipe/text.hpp"

namespace echomoe::metrics {

using textpipe::Tokens;

/// Candidate tokens matched against the reference, each reference token
/// usable at most as often as it occurs.
std::size_t clipped_unigram_matches(const Tokens& candidate, const Tokens& reference);

/// Clipped unigram precision times the brevity penalty min(1, e^{1−|r|/|c|}).
double bleu1(const Tokens& candidate, const Tokens& reference);

/// F1 over clipped unigram overlap.
double rouge1(const Tokens& candidate, const Tokens& reference);

/// LCS F1, identical to textpipe::rouge_l_sim.
double rougeL(const Tokens& candidate, const Tokens& reference);

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

/// Exact-match unigram alignment with the most matches and, among those, the
/// fewest chunks. The search is exhaustive up to a node budget, after which
/// the best alignment found so far is returned; the search explores
/// chunk-extending choices first.
MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference);

/// Fmean·(1 − 0.5·(chunks/matches)³) with Fmean = 10PR/(R + 9P); 0 without
/// matches.
double meteor_exact(const Tokens& candidate, const Tokens& reference);

struct EvalPair {
  Tokens candidate;
  Tokens reference;
  std::string tag;
};

struct ReportRow {
  std::string tag;
  std::size_t pairs = 0;
  // Scaled ×100.
  double bleu1 = 0.0;
  double rouge1 = 0.0;
  double rougeL = 0.0;
  double meteor = 0.0;
  /// Set for tags that were requested but had no pairs.
  std::string warning;
};

struct Report {
  /// Tags in lexicographic order, warning rows included, then "Average".
  std::vector<ReportRow> rows;
};

inline constexpr const char* kAverageTag = "Average";

/// Per-tag macro averages of the four metrics; the Average row is the mean
/// of the (non-warning) tag rows. Tags listed in `expected_tags` without
/// pairs get a warning row and are left out of the average. Empty input is a
/// ContractError.
Report evaluate_corpus(std::span<const EvalPair> pairs,
                       std::span<const std::string> expected_tags = {});

void write_csv(std::ostream& out, const Report& report);
void write_table(std::ostream& out, const Report& report);

}  // namespace echomoe::metrics
