// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>

#include "echomoe/lora/lora.hpp"
#include "echomoe/model/config.hpp"
#include "echomoe/train/train.hpp"

namespace echomoe::lora {
void to_json(nlohmann::json& j, const LoraConfig& c);
void from_json(const nlohmann::json& j, LoraConfig& c);
}  // namespace echomoe::lora

namespace echomoe::cli {

/// Environment variable that replaces the configured seed.
inline constexpr const char* kSeedEnv = "ECHO_MOE_SEED";

/// Everything a run depends on. Serialised verbatim into checkpoint
/// manifests under "run".
struct RunConfig {
  model::ModelConfig model;
  train::TrainPlan stage1;
  train::TrainPlan stage2;
  lora::LoraConfig lora;
  std::uint64_t seed = 0;
  /// captions.jsonl written by `synth`.
  std::filesystem::path captions = "corpus/captions.jsonl";
  std::filesystem::path output_dir = "run";

  /// Desk defaults: 200 Stage I epochs and 100 Stage II epochs.
  RunConfig();

  /// Plan for `stage` with the run seed applied.
  train::TrainPlan plan(train::Stage stage) const;
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
void from_json(const nlohmann::json& j, RunConfig& c);

/// Reads a JSON config file (relative paths inside it resolve against the
/// file's directory), then applies ECHO_MOE_SEED if set. Without a path the
/// defaults are used.
RunConfig load_run_config(const std::optional<std::filesystem::path>& path);

/// Parses a seed from text; trailing garbage or overflow raises ConfigError.
std::uint64_t parse_seed(const std::string& text);

}  // namespace echomoe::cli
