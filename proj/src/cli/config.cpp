// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/cli/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>

#include "echomoe/errors.hpp"

namespace echomoe::lora {

void to_json(nlohmann::json& j, const LoraConfig& c) {
  j = nlohmann::json{{"rank", c.rank}, {"alpha", c.alpha}, {"dropout", c.dropout}};
}

void from_json(const nlohmann::json& j, LoraConfig& c) {
  if (!j.is_object()) throw ConfigError("lora config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "rank") {
        value.get_to(c.rank);
      } else if (key == "alpha") {
        value.get_to(c.alpha);
      } else if (key == "dropout") {
        value.get_to(c.dropout);
      } else {
        throw ConfigError("lora config: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("lora config: ") + e.what());
  }
}

}  // namespace echomoe::lora

namespace echomoe::cli {

RunConfig::RunConfig()
    : stage1(train::TrainPlan::for_stage(train::Stage::I)),
      stage2(train::TrainPlan::for_stage(train::Stage::II)) {
  stage1.epochs = 200;
  stage2.epochs = 100;
}

train::TrainPlan RunConfig::plan(train::Stage stage) const {
  train::TrainPlan p = stage == train::Stage::I ? stage1 : stage2;
  p.stage = stage;
  p.seed = seed;
  return p;
}

void RunConfig::validate() const {
  model.validate();
  plan(train::Stage::I).validate();
  plan(train::Stage::II).validate();
  if (stage1.stage != train::Stage::I) throw ConfigError("stage1 plan is marked as stage II");
  if (stage2.stage != train::Stage::II) throw ConfigError("stage2 plan is marked as stage I");
  if (lora.rank == 0) throw ConfigError("lora rank must be positive");
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"model", c.model},
                     {"stage1", c.stage1},
                     {"stage2", c.stage2},
                     {"lora", c.lora},
                     {"seed", c.seed},
                     {"captions", c.captions.generic_string()},
                     {"output_dir", c.output_dir.generic_string()}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "model") {
      value.get_to(c.model);
    } else if (key == "stage1") {
      value.get_to(c.stage1);
    } else if (key == "stage2") {
      value.get_to(c.stage2);
    } else if (key == "lora") {
      value.get_to(c.lora);
    } else if (key == "seed") {
      if (!value.is_number_unsigned()) throw ConfigError("run config: seed must be unsigned");
      c.seed = value.get<std::uint64_t>();
    } else if (key == "captions" || key == "output_dir") {
      if (!value.is_string()) throw ConfigError("run config: '" + key + "' must be a string");
      (key == "captions" ? c.captions : c.output_dir) = value.get<std::string>();
    } else {
      throw ConfigError("run config: unknown key '" + key + "'");
    }
  }
}

std::uint64_t parse_seed(const std::string& text) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc{} || ptr != end) {
    throw ConfigError("invalid seed '" + text + "'");
  }
  return v;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& path) {
  RunConfig c;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw IoError("cannot read config " + path->string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config " + path->string() + ": " + e.what());
    }
    c = j.get<RunConfig>();
    const auto base = path->parent_path();
    if (c.captions.is_relative()) c.captions = base / c.captions;
    if (c.output_dir.is_relative()) c.output_dir = base / c.output_dir;
  }
  if (const char* env = std::getenv(kSeedEnv); env && *env) c.seed = parse_seed(env);
  c.validate();
  return c;
}

}  // namespace echomoe::cli
