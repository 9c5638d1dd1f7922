// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/textpipe/text.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <array>
#include <bit>
#include <set>
#include <stdexcept>

#include "echomoe/numerics/rng.hpp"

namespace echomoe::textpipe {

Tokens normalize(std::string_view text, TokenMode mode) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFC normaliser unavailable");
  icu::UnicodeString s = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  s = nfc->normalize(s, status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFC normalisation failed");
  s.toLower(icu::Locale::getRoot());

  Tokens out;
  icu::UnicodeString current;
  auto flush = [&] {
    if (current.isEmpty()) return;
    std::string utf8;
    current.toUTF8String(utf8);
    out.push_back(std::move(utf8));
    current.remove();
  };
  for (int32_t i = 0; i < s.length(); i = s.moveIndex32(i, 1)) {
    const UChar32 c = s.char32At(i);
    if (u_isUWhiteSpace(c) || u_ispunct(c) || u_iscntrl(c)) {
      flush();
      continue;
    }
    current.append(c);
    if (mode == TokenMode::Character) flush();
  }
  flush();
  return out;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_sim(const Tokens& a, const Tokens& b) {
  const std::size_t lcs = lcs_length(a, b);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(a.size());
  const double r = static_cast<double>(lcs) / static_cast<double>(b.size());
  return 2.0 * p * r / (p + r);
}

std::uint64_t simhash64(const Tokens& tokens) {
  std::set<std::string> features(tokens.begin(), tokens.end());
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    features.insert(tokens[i] + ' ' + tokens[i + 1]);
  }
  std::array<int, 64> votes{};
  for (const auto& f : features) {
    const std::uint64_t h = fnv1a64(f);
    for (int bit = 0; bit < 64; ++bit) votes[bit] += (h >> bit) & 1U ? 1 : -1;
  }
  std::uint64_t sig = 0;
  for (int bit = 0; bit < 64; ++bit) {
    if (votes[bit] > 0) sig |= std::uint64_t{1} << bit;
  }
  return sig;
}

int hamming(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }

}  // namespace echomoe::textpipe
