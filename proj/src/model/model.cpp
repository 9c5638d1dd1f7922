// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/model/model.hpp"

#include <cmath>
#include <numeric>

#include "echomoe/errors.hpp"
#include "echomoe/numerics/init.hpp"
#include "echomoe/numerics/ops.hpp"

namespace echomoe::model {
namespace {

double fan_in_std(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

ParamId add_linear(ParameterStore& store, const std::string& name, std::size_t out, std::size_t in,
                   SplitMix64& rng) {
  return store.add(name, gaussian_tensor({out, in}, fan_in_std(in), rng));
}

Var projection(Tape& tape, const Model& model, ParamId w, Var x, const ForwardOptions& opts) {
  return lora::lora_apply(tape, model.store, w, model.adapter_for(w), x, opts.training,
                          opts.dropout_rng);
}

Var affine(Tape& tape, const Model& model, ParamId w, ParamId b, Var x,
           const ForwardOptions& opts) {
  return ops::add_rowvec(projection(tape, model, w, x, opts), tape.parameter(model.store, b));
}

}  // namespace

const lora::LoraAdapter* Model::adapter_for(ParamId base) const {
  auto it = adapters.find(base);
  return it == adapters.end() ? nullptr : &it->second;
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  SplitMix64 root(seed);
  SplitMix64 rng = root.fork("model");
  ParameterStore& s = m.store;
  const std::size_t d = config.d_model;

  const std::size_t patch_in = config.patch * config.patch * config.channels;
  m.vision.patch_w = add_linear(s, "vision.patch.w", config.vision_dim, patch_in, rng);
  m.vision.patch_b = s.add("vision.patch.b", Tensor({config.vision_dim}));
  m.vision.merge_w =
      add_linear(s, "vision.merge.w", config.merge_dim, config.merge * config.vision_dim, rng);
  m.vision.merge_b = s.add("vision.merge.b", Tensor({config.merge_dim}));
  m.vision.proj_w1 = add_linear(s, "projector.w1", config.projector_hidden, config.merge_dim, rng);
  m.vision.proj_b1 = s.add("projector.b1", Tensor({config.projector_hidden}));
  m.vision.proj_w2 = add_linear(s, "projector.w2", d, config.projector_hidden, rng);
  m.vision.proj_b2 = s.add("projector.b2", Tensor({d}));

  m.tok_embed = s.add("embed.tokens", gaussian_tensor({config.vocab, d}, 1.0, rng));
  m.pos_embed = s.add("embed.positions", gaussian_tensor({config.max_len, d}, 0.1, rng));

  const moe::MoeShape shape{d, config.ffn_hidden, config.shared_hidden, config.expert_hidden,
                            config.experts, config.top_k};
  for (std::size_t i = 0; i < config.blocks; ++i) {
    const std::string p = "blocks." + std::to_string(i);
    BlockParams b;
    b.ln1_gamma = s.add(p + ".ln1.gamma", Tensor({d}, 1.0));
    b.ln1_beta = s.add(p + ".ln1.beta", Tensor({d}));
    b.wq = add_linear(s, p + ".attn.wq", d, d, rng);
    b.wk = add_linear(s, p + ".attn.wk", d, d, rng);
    b.wv = add_linear(s, p + ".attn.wv", d, d, rng);
    b.wo = add_linear(s, p + ".attn.wo", d, d, rng);
    b.ln2_gamma = s.add(p + ".ln2.gamma", Tensor({d}, 1.0));
    b.ln2_beta = s.add(p + ".ln2.beta", Tensor({d}));
    b.moe = moe::add_dual_path_moe(s, p + ".moe", shape, rng);
    m.blocks.push_back(std::move(b));
  }
  m.head = add_linear(s, "head.w", config.vocab, d, rng);
  return m;
}

std::vector<ParamId> lora_sites(const Model& model) {
  std::vector<ParamId> sites;
  for (const auto& b : model.blocks) {
    for (ParamId id : {b.wq, b.wk, b.wv, b.wo}) sites.push_back(id);
  }
  sites.push_back(model.vision.proj_w1);
  sites.push_back(model.vision.proj_w2);
  return sites;
}

void attach_lora(Model& model, const lora::LoraConfig& config, std::uint64_t seed) {
  if (!model.adapters.empty()) throw ContractError("attach_lora: adapters already attached");
  SplitMix64 rng = SplitMix64(seed).fork("lora");
  for (ParamId site : lora_sites(model)) {
    model.adapters.emplace(
        site, lora::attach_adapter(model.store, model.store.at(site).name, site, config, rng));
  }
}

Tensor extract_patches(const Tensor& image, std::size_t patch, PatchGrid* grid) {
  if (image.rank() != 3) {
    throw DimensionError("extract_patches: expected H×W×C image, got " + to_string(image.shape()));
  }
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw ConfigError("image " + std::to_string(h) + "x" + std::to_string(w) +
                      " not divisible by patch " + std::to_string(patch));
  }
  const std::size_t gr = h / patch, gc = w / patch, len = patch * patch * c;
  Tensor out({gr * gc, len});
  const auto src = image.data();
  for (std::size_t pr = 0; pr < gr; ++pr) {
    for (std::size_t pc = 0; pc < gc; ++pc) {
      double* dst = &out.at(pr * gc + pc, 0);
      for (std::size_t y = 0; y < patch; ++y) {
        const std::size_t base = ((pr * patch + y) * w + pc * patch) * c;
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(base), patch * c, dst + y * patch * c);
      }
    }
  }
  if (grid) *grid = {gr, gc};
  return out;
}

Var patch_embed(Tape& tape, const Model& model, const Tensor& image, PatchGrid* grid) {
  Var patches = tape.constant(extract_patches(image, model.config.patch, grid));
  return ops::add_rowvec(ops::linear(patches, tape.parameter(model.store, model.vision.patch_w)),
                         tape.parameter(model.store, model.vision.patch_b));
}

Var patch_merge(Tape& tape, const Model& model, Var tokens, PatchGrid grid, PatchGrid* out_grid) {
  const std::size_t s = model.config.merge_side();
  if (grid.rows % s != 0 || grid.cols % s != 0) {
    throw ConfigError("patch_merge: grid " + std::to_string(grid.rows) + "x" +
                      std::to_string(grid.cols) + " not divisible by " + std::to_string(s));
  }
  if (tokens.shape().size() != 2 || tokens.shape()[0] != grid.rows * grid.cols) {
    throw DimensionError("patch_merge: " + to_string(tokens.shape()) + " tokens for a " +
                         std::to_string(grid.rows) + "x" + std::to_string(grid.cols) + " grid");
  }
  const std::size_t orows = grid.rows / s, ocols = grid.cols / s;
  std::vector<std::size_t> order;
  order.reserve(grid.rows * grid.cols);
  for (std::size_t br = 0; br < orows; ++br)
    for (std::size_t bc = 0; bc < ocols; ++bc)
      for (std::size_t dr = 0; dr < s; ++dr)
        for (std::size_t dc = 0; dc < s; ++dc)
          order.push_back((br * s + dr) * grid.cols + bc * s + dc);
  const std::size_t width = tokens.shape()[1];
  Var grouped = ops::reshape(ops::gather_rows(tokens, order), {orows * ocols, s * s * width});
  if (out_grid) *out_grid = {orows, ocols};
  return ops::add_rowvec(ops::linear(grouped, tape.parameter(model.store, model.vision.merge_w)),
                         tape.parameter(model.store, model.vision.merge_b));
}

Var project_visual(Tape& tape, const Model& model, Var merged, const ForwardOptions& opts) {
  Var h = ops::silu(affine(tape, model, model.vision.proj_w1, model.vision.proj_b1, merged, opts));
  return affine(tape, model, model.vision.proj_w2, model.vision.proj_b2, h, opts);
}

Var encode_image(Tape& tape, const Model& model, const Tensor& image, const ForwardOptions& opts) {
  PatchGrid grid;
  Var tokens = patch_embed(tape, model, image, &grid);
  return project_visual(tape, model, patch_merge(tape, model, tokens, grid, nullptr), opts);
}

Var embed_text(Tape& tape, const Model& model, std::span<const std::size_t> ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= model.config.vocab) {
      throw DataError("embed_text: token id " + std::to_string(ids[i]) + " at position " +
                      std::to_string(i) + " outside vocabulary of " +
                      std::to_string(model.config.vocab));
    }
  }
  return ops::gather_rows(tape.parameter(model.store, model.tok_embed), ids);
}

Var attention(Tape& tape, const Model& model, const BlockParams& block, Var x,
              const ForwardOptions& opts) {
  const std::size_t heads = model.config.heads, dh = model.config.head_dim();
  Var q = projection(tape, model, block.wq, x, opts);
  Var k = projection(tape, model, block.wk, x, opts);
  Var v = projection(tape, model, block.wv, x, opts);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = ops::slice_cols(q, h * dh, dh);
    Var kh = ops::slice_cols(k, h * dh, dh);
    Var vh = ops::slice_cols(v, h * dh, dh);
    Var p = ops::causal_softmax(ops::scale(ops::linear(qh, kh), inv_sqrt));
    outs.push_back(ops::matmul(p, vh));
  }
  Var merged = heads == 1 ? outs[0] : ops::concat_cols(outs);
  return projection(tape, model, block.wo, merged, opts);
}

BlockOutput block_forward(Tape& tape, const Model& model, const BlockParams& block, Var x,
                          std::span<const moe::Modality> modality, const ForwardOptions& opts) {
  const ParameterStore& s = model.store;
  const double eps = model.config.ln_eps;
  Var h = ops::layer_norm(x, tape.parameter(s, block.ln1_gamma), tape.parameter(s, block.ln1_beta),
                          eps);
  Var mid = ops::add(attention(tape, model, block, h, opts), x);
  Var h2 = ops::layer_norm(mid, tape.parameter(s, block.ln2_gamma),
                           tape.parameter(s, block.ln2_beta), eps);
  BlockOutput out{Var{}, moe::moe_forward(tape, s, block.moe, h2, modality, opts.mix)};
  out.y = ops::add(out.moe.y, mid);
  return out;
}

ForwardResult forward(Tape& tape, const Model& model, const SequenceInput& input,
                      const ForwardOptions& opts) {
  const ModelConfig& c = model.config;
  ForwardResult r;
  std::vector<Var> parts;
  if (input.image) {
    parts.push_back(encode_image(tape, model, *input.image, opts));
    r.visual_tokens = parts.back().shape()[0];
  }
  const std::size_t total = r.visual_tokens + input.text.size();
  if (total == 0) throw ContractError("forward: empty sequence");
  if (total > c.max_len) {
    throw ContractError("forward: sequence length " + std::to_string(total) + " exceeds max_len " +
                        std::to_string(c.max_len));
  }
  if (!input.text.empty()) parts.push_back(embed_text(tape, model, input.text));
  Var x = parts.size() == 1 ? parts[0] : ops::concat_rows(parts);

  std::vector<std::size_t> positions(total);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  x = ops::add(x, ops::gather_rows(tape.parameter(model.store, model.pos_embed), positions));

  r.modality.assign(r.visual_tokens, moe::Modality::Image);
  r.modality.resize(total, moe::Modality::Text);
  for (const auto& block : model.blocks) {
    BlockOutput b = block_forward(tape, model, block, x, r.modality, opts);
    x = b.y;
    r.layers.push_back(std::move(b.moe));
  }
  r.logits = ops::linear(x, tape.parameter(model.store, model.head));
  return r;
}

Var ar_loss(Var logits, std::span<const std::size_t> targets) {
  return ops::cross_entropy(logits, targets);
}

double ar_loss(const Tensor& logits, std::span<const std::size_t> targets) {
  Tape tape(false);
  return ar_loss(tape.constant(logits), targets).value().item();
}

double total_loss(double ar, double bal, double gamma) {
  if (gamma < 0.0) throw ConfigError("total_loss: gamma must be nonnegative");
  return ar + gamma * bal;
}

Var total_loss(Var ar, Var bal, double gamma) {
  if (gamma < 0.0) throw ConfigError("total_loss: gamma must be nonnegative");
  return ops::add(ar, ops::scale(bal, gamma));
}

BatchLoss batch_loss(Tape& tape, const Model& model, std::span<const SequenceInput> batch,
                     double gamma, const ForwardOptions& opts) {
  if (batch.empty()) throw ContractError("batch_loss: empty batch");
  const std::size_t layers = model.blocks.size();
  std::vector<Var> logit_rows;
  std::vector<std::size_t> targets;
  std::vector<std::vector<moe::RoutingDecision>> routing(layers);
  std::vector<std::vector<Var>> probs(layers);
  std::vector<moe::Modality> modality;

  for (const auto& seq : batch) {
    if (seq.response_start > seq.text.size()) {
      throw ContractError("batch_loss: response starts past the end of the text");
    }
    ForwardResult r = forward(tape, model, seq, opts);
    if (seq.response_length() > 0) {
      if (r.visual_tokens + seq.response_start == 0) {
        throw ContractError("batch_loss: the first sequence position has no predecessor");
      }
      std::vector<std::size_t> rows;
      for (std::size_t j = seq.response_start; j < seq.text.size(); ++j) {
        rows.push_back(r.visual_tokens + j - 1);
        targets.push_back(seq.text[j]);
      }
      logit_rows.push_back(ops::gather_rows(r.logits, rows));
    }
    for (std::size_t l = 0; l < layers; ++l) {
      routing[l].push_back(std::move(r.layers[l].routing));
      probs[l].push_back(r.layers[l].probs);
    }
    modality.insert(modality.end(), r.modality.begin(), r.modality.end());
  }
  if (targets.empty()) throw ContractError("batch_loss: batch has no response tokens");

  BatchLoss out;
  out.response_tokens = targets.size();
  out.ar = ar_loss(logit_rows.size() == 1 ? logit_rows[0] : ops::concat_rows(logit_rows), targets);
  for (std::size_t l = 0; l < layers; ++l) {
    moe::DispatchStats stats = moe::dispatch_stats(moe::concat(routing[l]), modality);
    Var p = probs[l].size() == 1 ? probs[l][0] : ops::concat_rows(probs[l]);
    Var bal = moe::balance_loss(p, stats.dispatch);
    out.bal = l == 0 ? bal : ops::add(out.bal, bal);
    out.layer_stats.push_back(std::move(stats));
  }
  out.total = total_loss(out.ar, out.bal, gamma);
  return out;
}

std::vector<std::size_t> greedy_decode(const Model& model, const SequenceInput& prompt,
                                       std::size_t max_new) {
  const ModelConfig& c = model.config;
  const std::size_t visual = prompt.image ? c.visual_tokens() : 0;
  if (visual + prompt.text.size() + max_new > c.max_len) {
    throw ContractError("greedy_decode: prompt of " + std::to_string(visual + prompt.text.size()) +
                        " positions plus " + std::to_string(max_new) +
                        " new tokens exceeds max_len " + std::to_string(c.max_len));
  }
  SequenceInput seq = prompt;
  seq.response_start = seq.text.size();
  std::vector<std::size_t> generated;
  for (std::size_t step = 0; step < max_new; ++step) {
    Tape tape(false);
    ForwardResult r = forward(tape, model, seq);
    const auto last = r.logits.value().row(r.logits.shape()[0] - 1);
    std::size_t best = 0;
    for (std::size_t v = 1; v < last.size(); ++v) {
      if (last[v] > last[best]) best = v;
    }
    if (best == c.eos_id) break;
    generated.push_back(best);
    seq.text.push_back(best);
  }
  return generated;
}

}  // namespace echomoe::model
