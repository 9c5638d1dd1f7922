// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/train/train.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "echomoe/errors.hpp"
#include "echomoe/lora/lora.hpp"
#include "echomoe/model/checkpoint.hpp"

namespace echomoe::train {
namespace {

bool has_prefix(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

// "blocks.<digits>.<rest>" → rest, or nullopt.
std::optional<std::string_view> block_suffix(std::string_view name) {
  if (!has_prefix(name, "blocks.")) return std::nullopt;
  name.remove_prefix(7);
  std::size_t i = 0;
  while (i < name.size() && std::isdigit(static_cast<unsigned char>(name[i]))) ++i;
  if (i == 0 || i >= name.size() || name[i] != '.') return std::nullopt;
  return name.substr(i + 1);
}

}  // namespace

std::string to_string(Stage stage) { return stage == Stage::I ? "I" : "II"; }

Stage parse_stage(const std::string& text) {
  if (text == "I" || text == "1" || text == "i") return Stage::I;
  if (text == "II" || text == "2" || text == "ii") return Stage::II;
  throw ConfigError("unknown training stage '" + text + "' (expected I or II)");
}

Role classify(const std::string& name) {
  if (has_prefix(name, lora::kPrefix)) return Role::Adapter;
  for (const char* base : {"vision.", "projector.", "embed.", "head."}) {
    if (has_prefix(name, base)) return Role::Base;
  }
  if (auto rest = block_suffix(name)) {
    for (const char* base : {"ln1.", "ln2.", "attn."}) {
      if (has_prefix(*rest, base)) return Role::Base;
    }
    if (has_prefix(*rest, "moe.static.")) return Role::StaticFfn;
    for (const char* add : {"moe.shared.", "moe.experts.", "moe.router", "moe.alpha_raw",
                            "moe.lambda_raw"}) {
      if (has_prefix(*rest, add)) return Role::MoeAddition;
    }
  }
  throw ConfigError("parameter '" + name + "' belongs to no known namespace");
}

std::vector<bool> freeze_mask(const ParameterStore& store, Stage stage) {
  std::vector<bool> frozen;
  frozen.reserve(store.size());
  for (const Parameter& p : store) {
    switch (classify(p.name)) {
      case Role::Base:
      case Role::StaticFfn:
        frozen.push_back(true);
        break;
      case Role::MoeAddition:
        frozen.push_back(false);
        break;
      case Role::Adapter:
        frozen.push_back(stage == Stage::I);
        break;
    }
  }
  return frozen;
}

void apply_freeze_mask(ParameterStore& store, Stage stage) {
  const std::vector<bool> mask = freeze_mask(store, stage);
  for (ParamId id = 0; id < store.size(); ++id) store.at(id).frozen = mask[id];
}

TrainPlan TrainPlan::for_stage(Stage stage) {
  TrainPlan p;
  p.stage = stage;
  p.lr_peak = stage == Stage::I ? 1e-3 : 2e-5;
  return p;
}

std::size_t TrainPlan::warmup_steps() const {
  return static_cast<std::size_t>(std::ceil(warmup_ratio * static_cast<double>(total_steps)));
}

void TrainPlan::validate() const {
  if (!(lr_peak >= 0.0)) throw ConfigError("lr_peak must be nonnegative");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw ConfigError("warmup_ratio must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be nonnegative");
  if (epochs == 0 || batch_size == 0) throw ConfigError("epochs and batch_size must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0)) {
    throw ConfigError("AdamW constants out of range");
  }
}

void to_json(nlohmann::json& j, const TrainPlan& p) {
  j = nlohmann::json{{"stage", to_string(p.stage)},     {"lr_peak", p.lr_peak},
                     {"warmup_ratio", p.warmup_ratio},  {"weight_decay", p.weight_decay},
                     {"gamma", p.gamma},                {"epochs", p.epochs},
                     {"batch_size", p.batch_size},      {"seed", p.seed},
                     {"beta1", p.beta1},                {"beta2", p.beta2},
                     {"adam_eps", p.adam_eps},          {"total_steps", p.total_steps}};
}

void from_json(const nlohmann::json& j, TrainPlan& p) {
  if (!j.is_object()) throw ConfigError("train plan must be a JSON object");
  const nlohmann::json known = p;
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("train plan: unknown key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("train plan: bad value for '") + key + "': " + e.what());
    }
  };
  if (j.contains("stage")) {
    const auto& s = j.at("stage");
    p.stage = parse_stage(s.is_string() ? s.get<std::string>() : s.dump());
  }
  get("lr_peak", p.lr_peak);
  get("warmup_ratio", p.warmup_ratio);
  get("weight_decay", p.weight_decay);
  get("gamma", p.gamma);
  get("epochs", p.epochs);
  get("batch_size", p.batch_size);
  get("seed", p.seed);
  get("beta1", p.beta1);
  get("beta2", p.beta2);
  get("adam_eps", p.adam_eps);
  get("total_steps", p.total_steps);
}

double lr_at(double step, const TrainPlan& plan) {
  const double total = static_cast<double>(plan.total_steps);
  if (plan.total_steps == 0 || step <= 0.0) return 0.0;
  if (step >= total) return 0.0;
  const double warmup = static_cast<double>(plan.warmup_steps());
  if (step < warmup) return plan.lr_peak * step / warmup;
  const double progress = (step - warmup) / (total - warmup);
  return plan.lr_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(const ParameterStore& store, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(store.size()), v_(store.size()) {
  for (ParamId id = 0; id < store.size(); ++id) {
    if (store.frozen(id)) continue;
    m_[id].assign(store.value(id).size(), 0.0);
    v_[id].assign(store.value(id).size(), 0.0);
  }
}

void AdamW::step(ParameterStore& store, const Gradients& grads, double lr, double weight_decay) {
  if (store.size() != m_.size()) throw ContractError("AdamW: parameter store changed size");
  for (const auto& [id, g] : grads.params()) {
    if (!g.all_finite()) {
      throw TrainingError("non-finite gradient for parameter " + store.at(id).name);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [id, g] : grads.params()) {
    if (store.frozen(id) || !has_moments(id)) continue;
    auto w = store.at(id).value.data();
    auto& m = m_[id];
    auto& v = v_[id];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      w[i] -= lr * (update + weight_decay * w[i]);
    }
  }
}

nlohmann::json to_json(const StepLog& log) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : log.layers) {
    layers.push_back({{"F", l.dispatch},
                      {"G", l.gate_mean},
                      {"F_image", l.dispatch_image},
                      {"F_text", l.dispatch_text}});
  }
  return {{"step", log.step},   {"epoch", log.epoch}, {"ar_loss", log.ar}, {"bal_loss", log.bal},
          {"total", log.total}, {"lr", log.lr},       {"layers", layers}};
}

TrainResult train_loop(model::Model& model, const TrainPlan& plan_in,
                       std::span<const model::SequenceInput> corpus, const TrainOptions& options) {
  if (corpus.empty()) throw ContractError("train_loop: empty corpus");
  TrainPlan plan = plan_in;
  plan.validate();
  const std::size_t per_epoch = (corpus.size() + plan.batch_size - 1) / plan.batch_size;
  if (plan.total_steps == 0) plan.total_steps = plan.epochs * per_epoch;

  if (plan.stage == Stage::II && model.adapters.empty()) {
    throw ContractError("train_loop: Stage II needs LoRA adapters attached");
  }
  apply_freeze_mask(model.store, plan.stage);

  TrainResult result;
  result.trainable_scalars = model.store.trainable_scalar_count();
  if (plan.stage == Stage::II) {
    std::size_t expected = 0;
    for (const auto& [base, adapter] : model.adapters) {
      const Tensor& w0 = model.store.value(base);
      expected += adapter.rank * (w0.rows() + w0.cols());
    }
    for (const Parameter& p : model.store) {
      if (!p.frozen && classify(p.name) == Role::Adapter) result.adapter_scalars += p.value.size();
    }
    if (result.adapter_scalars != expected) {
      throw ContractError("train_loop: " + std::to_string(result.adapter_scalars) +
                          " trainable adapter values, expected " + std::to_string(expected));
    }
  }

  std::ofstream log_file;
  if (options.log_path) {
    log_file.open(*options.log_path, std::ios::trunc);
    if (!log_file) throw IoError("cannot open metrics log " + options.log_path->string());
  }

  AdamW opt(model.store, plan.beta1, plan.beta2, plan.adam_eps);
  const SplitMix64 root(plan.seed);
  SplitMix64 dropout = root.fork("dropout");
  model::ForwardOptions fwd;
  fwd.training = true;
  fwd.dropout_rng = &dropout;

  std::vector<std::size_t> order(corpus.size());
  std::size_t update = 0;
  for (std::size_t epoch = 0; epoch < plan.epochs && update < plan.total_steps; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 shuffle = root.fork("epoch").fork(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    for (std::size_t start = 0; start < order.size() && update < plan.total_steps;
         start += plan.batch_size) {
      std::vector<model::SequenceInput> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + plan.batch_size); ++i) {
        batch.push_back(corpus[order[i]]);
      }
      ++update;
      Tape tape;
      model::BatchLoss loss = model::batch_loss(tape, model, batch, plan.gamma, fwd);
      Gradients grads = tape.backward(loss.total);
      const double lr = lr_at(static_cast<double>(update), plan);
      opt.step(model.store, grads, lr, plan.weight_decay);

      StepLog entry;
      entry.step = update;
      entry.epoch = epoch;
      entry.ar = loss.ar.value().item();
      entry.bal = loss.bal.value().item();
      entry.total = loss.total.value().item();
      entry.lr = lr;
      for (const auto& s : loss.layer_stats) {
        entry.layers.push_back({s.dispatch, s.gate_mean, s.dispatch_image, s.dispatch_text});
      }
      if (log_file.is_open()) log_file << to_json(entry).dump() << '\n';
      if (options.on_step) options.on_step(entry);
      result.log.push_back(std::move(entry));
    }
  }
  if (log_file.is_open() && !log_file.flush()) {
    throw IoError("write failed for metrics log " + options.log_path->string());
  }

  if (options.checkpoint_dir) {
    nlohmann::json echo = options.config_echo;
    echo["train"] = plan;
    model::save_checkpoint(*options.checkpoint_dir, model.store, echo, plan.seed);
  }
  return result;
}

}  // namespace echomoe::train
