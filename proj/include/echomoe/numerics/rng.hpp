// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace echomoe {

// SplitMix64. Every random draw in the project flows from one of these, so
// results are reproducible across platforms and standard libraries (the
// <random> distributions are implementation-defined).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform();

  /// Standard normal via Box-Muller.
  double normal();

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Independent child stream keyed by `salt`. Does not advance this stream.
  SplitMix64 fork(std::uint64_t salt) const;
  SplitMix64 fork(std::string_view label) const;

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
  std::optional<double> spare_normal_;
};

std::uint64_t mix64(std::uint64_t x);

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace echomoe
