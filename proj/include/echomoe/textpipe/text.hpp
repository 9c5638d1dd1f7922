// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace echomoe::textpipe {

using Tokens = std::vector<std::string>;

enum class TokenMode {
  Word,       // runs of non-space, non-punctuation code points
  Character,  // every non-space, non-punctuation code point on its own
};

/// Unicode NFC, lowercase, then split on whitespace and punctuation. The
/// punctuation itself is dropped, as are empty tokens. Invalid UTF-8 is
/// replaced by U+FFFD before normalisation.
Tokens normalize(std::string_view text, TokenMode mode = TokenMode::Word);

/// LCS-based F1 between two token sequences; 0 if either is empty.
double rouge_l_sim(const Tokens& a, const Tokens& b);

/// Length of the longest common subsequence.
std::size_t lcs_length(const Tokens& a, const Tokens& b);

/// 64-bit Simhash over the set of unigrams and adjacent bigrams, each hashed
/// with FNV-1a 64 and voting ±1 per bit; a bit is set only on a strictly
/// positive vote, so an empty input gives 0.
std::uint64_t simhash64(const Tokens& tokens);

int hamming(std::uint64_t a, std::uint64_t b);

}  // namespace echomoe::textpipe
