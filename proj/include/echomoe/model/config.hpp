// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include <json.hpp>

namespace echomoe::model {

/// Byte-level vocabulary: ids 0..255 are raw bytes, followed by specials.
/// Smaller vocabularies are accepted for non-text experiments.
inline constexpr std::size_t kByteVocab = 256;

struct ModelConfig {
  std::size_t d_model = 32;
  std::size_t blocks = 2;
  std::size_t heads = 4;
  std::size_t vocab = 258;
  std::size_t max_len = 96;
  std::size_t sep_id = 256;
  std::size_t eos_id = 257;

  // Vision path: image side × side × channels, cut into patch×patch tiles,
  // then merged merge-at-a-time (a perfect square) before projection.
  std::size_t image_side = 28;
  std::size_t channels = 3;
  std::size_t patch = 7;
  std::size_t merge = 4;
  std::size_t vision_dim = 32;
  std::size_t merge_dim = 32;
  std::size_t projector_hidden = 64;

  std::size_t ffn_hidden = 64;
  std::size_t experts = 4;
  std::size_t top_k = 2;
  std::size_t expert_hidden = 32;
  std::size_t shared_hidden = 128;

  double ln_eps = 1e-5;

  /// Throws ConfigError on any inconsistency.
  void validate() const;

  std::size_t head_dim() const { return d_model / heads; }
  std::size_t merge_side() const;
  /// Visual tokens after patch embedding and merging: side²/(patch²·merge).
  std::size_t visual_tokens() const;
};

/// Unknown keys are rejected; missing keys keep their defaults.
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace echomoe::model
