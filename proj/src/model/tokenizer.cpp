// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/model/tokenizer.hpp"

namespace echomoe::model {

std::vector<std::size_t> encode_bytes(std::string_view text) {
  std::vector<std::size_t> ids;
  ids.reserve(text.size());
  for (char ch : text) ids.push_back(static_cast<unsigned char>(ch));
  return ids;
}

std::string decode_bytes(std::span<const std::size_t> ids) {
  std::string out;
  for (std::size_t id : ids) {
    if (id < kByteVocab) out.push_back(static_cast<char>(id));
  }
  return out;
}

SequenceInput make_training_sequence(const ModelConfig& config, std::optional<Tensor> image,
                                     std::string_view prompt, std::string_view answer) {
  SequenceInput seq = make_prompt(config, std::move(image), prompt);
  seq.response_start = seq.text.size();
  for (std::size_t id : encode_bytes(answer)) seq.text.push_back(id);
  seq.text.push_back(config.eos_id);
  return seq;
}

SequenceInput make_prompt(const ModelConfig& config, std::optional<Tensor> image,
                          std::string_view prompt) {
  SequenceInput seq;
  seq.image = std::move(image);
  seq.text = encode_bytes(prompt);
  seq.text.push_back(config.sep_id);
  seq.response_start = seq.text.size();
  return seq;
}

}  // namespace echomoe::model
