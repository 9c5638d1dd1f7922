// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "echomoe/lora/lora.hpp"
#include "echomoe/model/config.hpp"
#include "echomoe/moe/dual_path_moe.hpp"
#include "echomoe/numerics/parameters.hpp"
#include "echomoe/numerics/tape.hpp"

namespace echomoe::model {

struct VisionParams {
  ParamId patch_w = 0;  // vision_dim × patch²·C
  ParamId patch_b = 0;
  ParamId merge_w = 0;  // merge_dim × merge·vision_dim
  ParamId merge_b = 0;
  ParamId proj_w1 = 0;  // projector_hidden × merge_dim
  ParamId proj_b1 = 0;
  ParamId proj_w2 = 0;  // d_model × projector_hidden
  ParamId proj_b2 = 0;
};

struct BlockParams {
  ParamId ln1_gamma = 0;
  ParamId ln1_beta = 0;
  ParamId wq = 0;
  ParamId wk = 0;
  ParamId wv = 0;
  ParamId wo = 0;
  ParamId ln2_gamma = 0;
  ParamId ln2_beta = 0;
  moe::DualPathMoEParams moe;
};

/// Parameter naming:
///   vision.*, projector.*, embed.*, head.*      base weights
///   blocks.<i>.ln{1,2}.*, blocks.<i>.attn.*      base weights
///   blocks.<i>.moe.static.*                      frozen FFN copy
///   blocks.<i>.moe.{shared,experts,router,alpha_raw,lambda_raw}*  MoE additions
///   lora.<site>.{A,B}                            adapters
struct Model {
  ModelConfig config;
  ParameterStore store;
  VisionParams vision;
  ParamId tok_embed = 0;  // vocab × D
  ParamId pos_embed = 0;  // max_len × D
  std::vector<BlockParams> blocks;
  ParamId head = 0;  // vocab × D
  /// Adapters keyed by the base weight they modify.
  std::map<ParamId, lora::LoraAdapter> adapters;

  const lora::LoraAdapter* adapter_for(ParamId base) const;
};

/// Randomly initialised model; all randomness is drawn from `seed`.
Model build_model(const ModelConfig& config, std::uint64_t seed);

/// Attaches adapters to every attention projection and both projector layers.
/// Calling it twice is a ContractError.
void attach_lora(Model& model, const lora::LoraConfig& config, std::uint64_t seed);

/// Adapter sites in attachment order, named like their base parameter.
std::vector<ParamId> lora_sites(const Model& model);

/// Per-call switches that do not belong to the parameters.
struct ForwardOptions {
  bool training = false;
  SplitMix64* dropout_rng = nullptr;
  /// Applied to every block's MoE layer.
  moe::MixOverride mix;
};

// ---- vision ----------------------------------------------------------------

struct PatchGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// Rearranges an H×W×C image into row-major flattened patches,
/// (H/p·W/p) × (p·p·C). Each patch is flattened row, column, channel.
Tensor extract_patches(const Tensor& image, std::size_t patch, PatchGrid* grid = nullptr);

/// Linear projection of every flattened patch.
Var patch_embed(Tape& tape, const Model& model, const Tensor& image, PatchGrid* grid);

/// Fuses each s×s neighbourhood of a token grid into one token (s² = merge)
/// by projecting the concatenation of its tokens, neighbourhood order
/// row-major. Output grid is rows/s × cols/s.
Var patch_merge(Tape& tape, const Model& model, Var tokens, PatchGrid grid, PatchGrid* out_grid);

/// Two-layer SiLU MLP from merge_dim to d_model.
Var project_visual(Tape& tape, const Model& model, Var merged, const ForwardOptions& opts = {});

/// Full vision path: patch_embed → patch_merge → project_visual.
Var encode_image(Tape& tape, const Model& model, const Tensor& image,
                 const ForwardOptions& opts = {});

// ---- text and blocks -------------------------------------------------------

/// Row lookup into the token embedding table; ids ≥ vocab raise DataError.
Var embed_text(Tape& tape, const Model& model, std::span<const std::size_t> ids);

/// Causal multi-head self-attention over all rows of x.
Var attention(Tape& tape, const Model& model, const BlockParams& block, Var x,
              const ForwardOptions& opts = {});

struct BlockOutput {
  Var y;
  moe::MoeOutput moe;
};

/// X' = MSA(LN(X)) + X; out = MoE(LN(X')) + X'.
BlockOutput block_forward(Tape& tape, const Model& model, const BlockParams& block, Var x,
                          std::span<const moe::Modality> modality = {},
                          const ForwardOptions& opts = {});

// ---- sequences -------------------------------------------------------------

/// One training or prompting sequence: optional image followed by text ids.
/// Text ids at positions ≥ response_start are the response to be predicted.
struct SequenceInput {
  std::optional<Tensor> image;
  std::vector<std::size_t> text;
  std::size_t response_start = 0;

  std::size_t response_length() const { return text.size() - response_start; }
};

struct ForwardResult {
  Var logits;  // K × vocab, row p predicts position p+1
  std::vector<moe::MoeOutput> layers;
  std::vector<moe::Modality> modality;
  std::size_t visual_tokens = 0;
};

ForwardResult forward(Tape& tape, const Model& model, const SequenceInput& input,
                      const ForwardOptions& opts = {});

/// Mean over rows of −log softmax(logits)[target].
Var ar_loss(Var logits, std::span<const std::size_t> targets);
double ar_loss(const Tensor& logits, std::span<const std::size_t> targets);

/// ar + γ·bal.
double total_loss(double ar, double bal, double gamma);
Var total_loss(Var ar, Var bal, double gamma);

/// Losses of one optimisation step over a batch of sequences. The balancing
/// statistics of each layer pool every token of the batch; `bal` is the sum
/// of the per-layer losses.
struct BatchLoss {
  Var ar;
  Var bal;
  Var total;
  std::size_t response_tokens = 0;
  std::vector<moe::DispatchStats> layer_stats;
};

BatchLoss batch_loss(Tape& tape, const Model& model, std::span<const SequenceInput> batch,
                     double gamma, const ForwardOptions& opts = {});

/// Appends argmax tokens (ties to the lowest id) until eos or max_new tokens.
/// The returned continuation excludes eos. Prompt text plus max_new must fit
/// in max_len together with the visual tokens.
std::vector<std::size_t> greedy_decode(const Model& model, const SequenceInput& prompt,
                                       std::size_t max_new);

}  // namespace echomoe::model
