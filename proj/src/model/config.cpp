// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/model/config.hpp"

#include <cmath>
#include <set>
#include <string>

#include "echomoe/errors.hpp"

namespace echomoe::model {
namespace {

std::size_t exact_sqrt(std::size_t n) {
  auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  return r * r == n ? r : 0;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("model config: " + what);
}

}  // namespace

std::size_t ModelConfig::merge_side() const { return exact_sqrt(merge); }

std::size_t ModelConfig::visual_tokens() const {
  const std::size_t grid = image_side / patch;
  return grid * grid / merge;
}

void ModelConfig::validate() const {
  require(d_model > 0 && blocks > 0 && heads > 0, "d_model, blocks and heads must be positive");
  require(d_model % heads == 0, "d_model " + std::to_string(d_model) +
                                    " not divisible by heads " + std::to_string(heads));
  require(sep_id < vocab && eos_id < vocab && eos_id != sep_id,
          "sep_id and eos_id must be distinct ids below vocab");
  require(max_len > 0, "max_len must be positive");
  require(patch > 0 && channels > 0 && image_side > 0, "image geometry must be positive");
  require(merge > 0 && merge_side() > 0, "merge rate " + std::to_string(merge) +
                                             " is not a perfect square");
  require(image_side % (patch * merge_side()) == 0,
          "image side " + std::to_string(image_side) + " not divisible by patch*sqrt(merge) = " +
              std::to_string(patch * merge_side()));
  require(vision_dim > 0 && merge_dim > 0 && projector_hidden > 0, "vision widths must be positive");
  require(visual_tokens() < max_len, "visual tokens leave no room for text under max_len");
  require(ffn_hidden > 0 && expert_hidden > 0 && shared_hidden > 0, "FFN widths must be positive");
  require(experts > 0 && top_k > 0 && top_k <= experts, "need 1 <= top_k <= experts");
  require(ln_eps > 0.0, "ln_eps must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"d_model", c.d_model},
                     {"blocks", c.blocks},
                     {"heads", c.heads},
                     {"vocab", c.vocab},
                     {"max_len", c.max_len},
                     {"sep_id", c.sep_id},
                     {"eos_id", c.eos_id},
                     {"image_side", c.image_side},
                     {"channels", c.channels},
                     {"patch", c.patch},
                     {"merge", c.merge},
                     {"vision_dim", c.vision_dim},
                     {"merge_dim", c.merge_dim},
                     {"projector_hidden", c.projector_hidden},
                     {"ffn_hidden", c.ffn_hidden},
                     {"experts", c.experts},
                     {"top_k", c.top_k},
                     {"expert_hidden", c.expert_hidden},
                     {"shared_hidden", c.shared_hidden},
                     {"ln_eps", c.ln_eps}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  nlohmann::json defaults = c;
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("model config: unknown key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("model config: bad value for '") + key + "': " + e.what());
    }
  };
  get("d_model", c.d_model);
  get("blocks", c.blocks);
  get("heads", c.heads);
  get("vocab", c.vocab);
  get("max_len", c.max_len);
  get("sep_id", c.sep_id);
  get("eos_id", c.eos_id);
  get("image_side", c.image_side);
  get("channels", c.channels);
  get("patch", c.patch);
  get("merge", c.merge);
  get("vision_dim", c.vision_dim);
  get("merge_dim", c.merge_dim);
  get("projector_hidden", c.projector_hidden);
  get("ffn_hidden", c.ffn_hidden);
  get("experts", c.experts);
  get("top_k", c.top_k);
  get("expert_hidden", c.expert_hidden);
  get("shared_hidden", c.shared_hidden);
  get("ln_eps", c.ln_eps);
}

}  // namespace echomoe::model
