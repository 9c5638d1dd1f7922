// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "echomoe/model/model.hpp"
#include "echomoe/numerics/parameters.hpp"
#include "echomoe/numerics/tape.hpp"

namespace echomoe::train {

enum class Stage { I, II };

std::string to_string(Stage stage);
Stage parse_stage(const std::string& text);

/// What a parameter is, judged from its name.
enum class Role {
  Base,         // pretrained-model weights: vision, projector, embeddings, norms, attention, head
  StaticFfn,    // blocks.<i>.moe.static.*
  MoeAddition,  // shared expert, routed experts, router, alpha_raw, lambda_raw
  Adapter,      // lora.*
};

/// Throws ConfigError for names outside every known namespace.
Role classify(const std::string& name);

/// frozen[id] per stage: Stage I trains MoE additions only; Stage II trains
/// MoE additions and adapters. Base weights and static FFNs stay frozen.
std::vector<bool> freeze_mask(const ParameterStore& store, Stage stage);
void apply_freeze_mask(ParameterStore& store, Stage stage);

struct TrainPlan {
  Stage stage = Stage::I;
  double lr_peak = 1e-3;
  double warmup_ratio = 0.03;
  double weight_decay = 0.0;
  double gamma = 0.001;
  std::size_t epochs = 1;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Set by train_loop from epochs and corpus size when left at 0.
  std::size_t total_steps = 0;

  /// Stage defaults: lr 1e-3 for Stage I, 2e-5 for Stage II.
  static TrainPlan for_stage(Stage stage);
  std::size_t warmup_steps() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainPlan& p);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
void from_json(const nlohmann::json& j, TrainPlan& p);

/// Linear ramp to lr_peak over ceil(warmup_ratio·total_steps) steps, then
/// cosine decay to 0 at total_steps. Update number u (1-based) uses lr_at(u).
double lr_at(double step, const TrainPlan& plan);

/// Decoupled-weight-decay Adam with bias correction. Moments are kept for
/// trainable parameters only.
class AdamW {
 public:
  AdamW(const ParameterStore& store, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// Updates every trainable parameter that has a gradient. Frozen parameters
  /// are never touched. All gradients are checked before anything is
  /// written: a non-finite entry raises TrainingError naming the parameter
  /// and leaves the store and the moments unchanged.
  void step(ParameterStore& store, const Gradients& grads, double lr, double weight_decay);

  std::size_t steps() const { return t_; }
  bool has_moments(ParamId id) const { return id < m_.size() && !m_[id].empty(); }

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct LayerLog {
  std::vector<double> dispatch;
  std::vector<double> gate_mean;
  std::vector<double> dispatch_image;
  std::vector<double> dispatch_text;
};

struct StepLog {
  std::size_t step = 0;  // 1-based update number
  std::size_t epoch = 0;
  double ar = 0.0;
  double bal = 0.0;
  double total = 0.0;
  double lr = 0.0;
  std::vector<LayerLog> layers;
};

nlohmann::json to_json(const StepLog& log);

struct TrainOptions {
  /// JSON-lines metrics log, one object per step.
  std::optional<std::filesystem::path> log_path;
  std::optional<std::filesystem::path> checkpoint_dir;
  nlohmann::json config_echo = nlohmann::json::object();
  /// Called after every step, e.g. for progress output.
  std::function<void(const StepLog&)> on_step;
};

struct TrainResult {
  std::vector<StepLog> log;
  std::size_t trainable_scalars = 0;
  std::size_t adapter_scalars = 0;
};

/// Applies the stage's freeze mask, then runs epochs × ceil(N / batch_size)
/// AdamW steps on total = ar + γ·Σ_layers bal. Batches are drawn in a
/// seed-determined order per epoch. Stage II requires attached adapters and
/// asserts their trainable count equals Σ_sites r·(d + d').
TrainResult train_loop(model::Model& model, const TrainPlan& plan,
                       std::span<const model::SequenceInput> corpus,
                       const TrainOptions& options = {});

}  // namespace echomoe::train
