// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "echomoe/model/model.hpp"

namespace echomoe::model {

/// UTF-8 bytes as ids 0..255.
std::vector<std::size_t> encode_bytes(std::string_view text);

/// Inverse of encode_bytes; special ids are dropped.
std::string decode_bytes(std::span<const std::size_t> ids);

/// [image] prompt-bytes <sep> answer-bytes <eos>, with the response covering
/// the answer bytes and the eos.
SequenceInput make_training_sequence(const ModelConfig& config, std::optional<Tensor> image,
                                     std::string_view prompt, std::string_view answer);

/// [image] prompt-bytes <sep>, ready for greedy_decode.
SequenceInput make_prompt(const ModelConfig& config, std::optional<Tensor> image,
                          std::string_view prompt);

}  // namespace echomoe::model
