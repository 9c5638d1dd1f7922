// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "echomoe/errors.hpp"
#include "echomoe/model/checkpoint.hpp"
#include "echomoe/model/model.hpp"
#include "echomoe/model/tokenizer.hpp"
#include "echomoe/numerics/ops.hpp"
#include "support/model_fixture.hpp"
#include "support/model_gradcheck.hpp"

using namespace echomoe;
using namespace echomoe::model;
using echomoe::testkit::random_ids;
using echomoe::testkit::random_image;
using echomoe::testkit::random_tensor;
using echomoe::testkit::tiny_config;

namespace {

Tensor logits_of(const Model& m, const SequenceInput& in) {
  Tape tape(false);
  return forward(tape, m, in).logits.value();
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

}  // namespace

// ---- config ----------------------------------------------------------------

TEST(ModelConfig, DefaultsValidate) { EXPECT_NO_THROW(ModelConfig{}.validate()); }

TEST(ModelConfig, RejectsInconsistentGeometry) {
  ModelConfig c;
  c.heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.merge = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.image_side = 21;  // divisible by patch 7 but not by patch*2
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.top_k = 5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfig, JsonRoundTripAndUnknownKeys) {
  ModelConfig c = tiny_config();
  nlohmann::json j = c;
  ModelConfig back = j.get<ModelConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  j["d_modle"] = 8;
  EXPECT_THROW(j.get<ModelConfig>(), ConfigError);
}

// ---- vision ----------------------------------------------------------------

TEST(Vision, PaperResolutionYields196Tokens) {
  ModelConfig c;
  c.image_side = 392;
  c.patch = 14;
  c.merge = 4;
  c.channels = 1;
  c.vision_dim = 2;
  c.merge_dim = 2;
  c.max_len = 256;
  Model m = build_model(c, 1);
  Tape tape(false);
  PatchGrid grid, merged;
  Var tokens = patch_embed(tape, m, Tensor({392, 392, 1}), &grid);
  EXPECT_EQ(tokens.shape()[0], 784u);
  EXPECT_EQ(grid.rows, 28u);
  Var out = patch_merge(tape, m, tokens, grid, &merged);
  EXPECT_EQ(out.shape()[0], 196u);
  EXPECT_EQ(c.visual_tokens(), 196u);
}

TEST(Vision, SmallGridAndZeroImage) {
  ModelConfig c;
  c.image_side = 28;
  c.patch = 14;
  Model m = build_model(c, 2);
  Tape tape(false);
  PatchGrid grid;
  Var tokens = patch_embed(tape, m, Tensor({28, 28, 3}), &grid);
  EXPECT_EQ(tokens.shape(), (Shape{4, c.vision_dim}));
  for (double v : tokens.value().data()) EXPECT_EQ(v, 0.0);
  Var one = patch_merge(tape, m, tokens, grid, nullptr);
  EXPECT_EQ(one.shape(), (Shape{1, c.merge_dim}));
}

TEST(Vision, NonDivisibleImageOrGridIsConfigError) {
  Model m = build_model(ModelConfig{}, 3);
  Tape tape(false);
  EXPECT_THROW(patch_embed(tape, m, Tensor({30, 28, 3}), nullptr), ConfigError);
  PatchGrid grid;
  Var tokens = patch_embed(tape, m, Tensor({21, 28, 3}), &grid);  // 3×4 grid
  EXPECT_THROW(patch_merge(tape, m, tokens, grid, nullptr), ConfigError);
}

TEST(Vision, PatchesFlattenRowColumnChannel) {
  // 4×4×2 image with value = 100·y + 10·x + ch, patch 2.
  Tensor img({4, 4, 2});
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t ch = 0; ch < 2; ++ch) img[(y * 4 + x) * 2 + ch] = 100.0 * y + 10.0 * x + ch;
  PatchGrid grid;
  Tensor p = extract_patches(img, 2, &grid);
  ASSERT_EQ(p.shape(), (Shape{4, 8}));
  // Patch 1 is the top-right tile: rows 0..1, columns 2..3.
  const std::vector<double> want{20, 21, 30, 31, 120, 121, 130, 131};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(p.at(1, i), want[i]);
  // Patch 2 is bottom-left.
  EXPECT_EQ(p.at(2, 0), 200.0);
}

TEST(Vision, MergeMatchesNeighbourhoodConcatenation) {
  ModelConfig c = tiny_config();
  Model m = build_model(c, 4);
  SplitMix64 rng(5);
  Tensor tok = random_tensor({16, c.vision_dim}, rng);
  Tape tape(false);
  Tensor got = patch_merge(tape, m, tape.constant(tok), {4, 4}, nullptr).value();

  const Tensor& w = m.store.value(m.vision.merge_w);
  for (std::size_t br = 0; br < 2; ++br) {
    for (std::size_t bc = 0; bc < 2; ++bc) {
      std::vector<double> cat;
      for (std::size_t dr = 0; dr < 2; ++dr)
        for (std::size_t dc = 0; dc < 2; ++dc)
          for (double v : tok.row((br * 2 + dr) * 4 + bc * 2 + dc)) cat.push_back(v);
      for (std::size_t o = 0; o < c.merge_dim; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < cat.size(); ++i) acc += w.at(o, i) * cat[i];
        EXPECT_NEAR(got.at(br * 2 + bc, o), acc, 1e-12);
      }
    }
  }
}

TEST(Vision, IdenticalTokensMergeIdentically) {
  ModelConfig c = tiny_config();
  Model m = build_model(c, 6);
  Tensor tok({16, c.vision_dim});
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t j = 0; j < c.vision_dim; ++j) tok.at(r, j) = 0.5 + j;
  Tape tape(false);
  Tensor out = patch_merge(tape, m, tape.constant(tok), {4, 4}, nullptr).value();
  for (std::size_t r = 1; r < 4; ++r)
    for (std::size_t j = 0; j < c.merge_dim; ++j) EXPECT_EQ(out.at(r, j), out.at(0, j));
}

TEST(Vision, ProjectorZeroAndHandEvaluated) {
  ModelConfig c = tiny_config();
  c.merge_dim = 3;
  c.projector_hidden = 3;
  Model m = build_model(c, 7);
  Tape tape(false);
  Tensor zero = project_visual(tape, m, tape.constant(Tensor({5, 3}))).value();
  EXPECT_EQ(zero.shape(), (Shape{5, c.d_model}));
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);

  m.store.at(m.vision.proj_w1).value = Tensor::identity(3);
  Tensor w2({c.d_model, 3});
  w2.at(0, 0) = 1.0;
  w2.at(1, 1) = 2.0;
  w2.at(2, 0) = -1.0;
  w2.at(2, 2) = 0.5;
  m.store.at(m.vision.proj_w2).value = w2;
  Tape fresh(false);
  Tensor y = project_visual(fresh, m, fresh.constant(Tensor::matrix({{1.0, -2.0, 0.5}}))).value();
  EXPECT_NEAR(y.at(0, 0), silu(1.0), 1e-15);
  EXPECT_NEAR(y.at(0, 1), 2.0 * silu(-2.0), 1e-15);
  EXPECT_NEAR(y.at(0, 2), -silu(1.0) + 0.5 * silu(0.5), 1e-15);
  EXPECT_EQ(y.at(0, 3), 0.0);
}

// ---- text, attention, blocks -----------------------------------------------

TEST(EmbedText, RowLookup) {
  Model m = build_model(tiny_config(), 8);
  Tape tape(false);
  const std::vector<std::size_t> ids{3, 7, 3};
  Tensor e = embed_text(tape, m, ids).value();
  const Tensor& table = m.store.value(m.tok_embed);
  for (std::size_t j = 0; j < 16; ++j) {
    EXPECT_EQ(e.at(0, j), table.at(3, j));
    EXPECT_EQ(e.at(1, j), table.at(7, j));
    EXPECT_EQ(e.at(2, j), e.at(0, j));
  }
  EXPECT_EQ(embed_text(tape, m, {}).shape(), (Shape{0, 16}));
}

TEST(EmbedText, OutOfRangeNamesPosition) {
  Model m = build_model(tiny_config(), 8);
  Tape tape(false);
  const std::vector<std::size_t> ids{1, 2, 40};
  try {
    embed_text(tape, m, ids);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("position 2"), std::string::npos) << e.what();
  }
}

TEST(Block, ZeroOutputPathsLeavePureResidual) {
  Model m = build_model(tiny_config(), 9);
  const BlockParams& b = m.blocks[0];
  m.store.at(b.wo).value = Tensor({16, 16});
  m.store.at(b.moe.static_ffn.w_out).value = Tensor({16, 8});
  ForwardOptions opts;
  opts.mix.alpha = 1.0;
  SplitMix64 rng(10);
  Tensor x = random_tensor({5, 16}, rng);
  Tape tape(false);
  EXPECT_EQ(block_forward(tape, m, b, tape.constant(x), {}, opts).y.value(), x);
}

TEST(Block, SingleTokenAttentionIsValueThenOutputProjection) {
  Model m = build_model(tiny_config(), 11);
  const BlockParams& b = m.blocks[1];
  SplitMix64 rng(12);
  Tensor x = random_tensor({1, 16}, rng);
  Tape tape(false);
  Tensor got = attention(tape, m, b, tape.constant(x)).value();
  // Softmax over a single key is exactly 1.
  Tensor v = matmul_nt(x, m.store.value(b.wv));
  Tensor want = matmul_nt(v, m.store.value(b.wo));
  EXPECT_LT(max_abs_diff(got, want), 1e-12);
}

TEST(Forward, LaterPositionsNeverAffectEarlierLogits) {
  ModelConfig c = tiny_config();
  Model m = build_model(c, 13);
  SplitMix64 rng(14);
  SequenceInput in{random_image(c, rng), random_ids(9, c.vocab, rng), 4};
  Tensor base = logits_of(m, in);
  const std::size_t visual = c.visual_tokens();
  for (std::size_t j = 0; j < in.text.size(); ++j) {
    SequenceInput changed = in;
    for (std::size_t t = j; t < changed.text.size(); ++t) changed.text[t] = (changed.text[t] + 7) % c.vocab;
    Tensor other = logits_of(m, changed);
    for (std::size_t p = 0; p < visual + j; ++p)
      for (std::size_t v = 0; v < c.vocab; ++v) ASSERT_EQ(other.at(p, v), base.at(p, v)) << p;
  }
}

TEST(Forward, RepeatedPassesAreBitwiseIdentical) {
  ModelConfig c = tiny_config();
  Model m = build_model(c, 15);
  SplitMix64 rng(16);
  SequenceInput in{random_image(c, rng), random_ids(6, c.vocab, rng), 2};
  EXPECT_EQ(logits_of(m, in), logits_of(m, in));
}

TEST(Forward, LengthLimitIsContract) {
  ModelConfig c = tiny_config();
  Model m = build_model(c, 17);
  SplitMix64 rng(18);
  SequenceInput in{random_image(c, rng), random_ids(c.max_len - 3, c.vocab, rng), 1};
  Tape tape(false);
  EXPECT_THROW(forward(tape, m, in), ContractError);
}

// ---- losses ----------------------------------------------------------------

TEST(ArLoss, UniformLogitsGiveLogVocab) {
  Tensor logits({3, 256});
  const std::vector<std::size_t> t{0, 17, 255};
  EXPECT_NEAR(ar_loss(logits, t), std::log(256.0), 1e-12);
  EXPECT_NEAR(ar_loss(logits, t), 5.5452, 1e-4);
}

TEST(ArLoss, HandComputedPair) {
  const std::vector<std::size_t> t{0, 1};
  EXPECT_NEAR(ar_loss(Tensor::matrix({{1, 0}, {0, 1}}), t), std::log1p(std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(ar_loss(Tensor::matrix({{1, 0}, {0, 1}}), t), 0.31326, 1e-5);
}

TEST(ArLoss, ShrinksToZeroWithMarginAndStaysNonnegative) {
  const std::vector<std::size_t> t{2};
  double prev = INFINITY;
  for (double margin : {0.0, 1.0, 5.0, 20.0, 60.0}) {
    Tensor l({1, 4});
    l.at(0, 2) = margin;
    double loss = ar_loss(l, t);
    EXPECT_GE(loss, 0.0);
    EXPECT_LT(loss, prev);
    prev = loss;
  }
  EXPECT_LT(prev, 1e-20);
  const std::vector<std::size_t> bad{4};
  EXPECT_THROW(ar_loss(Tensor({1, 4}), bad), DataError);
}

TEST(TotalLoss, Examples) {
  EXPECT_EQ(total_loss(3.25, 0.7, 0.0), 3.25);
  EXPECT_NEAR(total_loss(5.0, 0.5, 0.001), 5.0005, 1e-15);
  EXPECT_EQ(total_loss(0.0, 1.0, 1.0), 1.0);
  EXPECT_THROW(total_loss(1.0, 1.0, -0.1), ConfigError);
}

TEST(BatchLoss, ComposesArAndSummedLayerBalance) {
  ModelConfig c = tiny_config();
  Model m = build_model(c, 19);
  SplitMix64 rng(20);
  std::vector<SequenceInput> batch{{random_image(c, rng), random_ids(6, c.vocab, rng), 3},
                                   {std::nullopt, random_ids(8, c.vocab, rng), 2}};
  Tape tape(false);
  BatchLoss loss = batch_loss(tape, m, batch, 0.01);
  EXPECT_EQ(loss.response_tokens, 3u + 6u);
  double bal = 0.0;
  for (const auto& s : loss.layer_stats) {
    bal += moe::balance_loss(s);
    EXPECT_EQ(s.tokens, 4u + 6u + 8u);
    EXPECT_EQ(s.image_tokens, 4u);
  }
  EXPECT_NEAR(loss.bal.value().item(), bal, 1e-14);
  EXPECT_NEAR(loss.total.value().item(), loss.ar.value().item() + 0.01 * bal, 1e-12);
}

// ---- end-to-end gradients --------------------------------------------------

TEST(EndToEnd, EveryTrainableParameterMatchesFiniteDifferences) {
  std::size_t checked = 0;
  for (const auto& r : testkit::end_to_end_gradcheck(21)) {
    if (r.frozen) {
      EXPECT_FALSE(r.has_gradient) << r.name;
      continue;
    }
    ASSERT_TRUE(r.has_gradient) << r.name;
    EXPECT_LT(r.error, 1e-4) << r.name;
    ++checked;
  }
  EXPECT_GT(checked, 50u);
}

// ---- decoding --------------------------------------------------------------

TEST(GreedyDecode, ZeroBudgetAndDeterminism) {
  ModelConfig c = tiny_config();
  Model m = build_model(c, 24);
  SplitMix64 rng(25);
  SequenceInput prompt{random_image(c, rng), random_ids(3, c.vocab - 2, rng), 3};
  EXPECT_TRUE(greedy_decode(m, prompt, 0).empty());
  EXPECT_EQ(greedy_decode(m, prompt, 6), greedy_decode(m, prompt, 6));
  EXPECT_THROW(greedy_decode(m, prompt, c.max_len), ContractError);
}

TEST(GreedyDecode, TiesGoToLowestId) {
  ModelConfig c = tiny_config();
  Model m = build_model(c, 26);
  m.store.at(m.head).value = Tensor({c.vocab, c.d_model});
  SequenceInput prompt{std::nullopt, {5, 6}, 2};
  EXPECT_EQ(greedy_decode(m, prompt, 3), (std::vector<std::size_t>{0, 0, 0}));
}

TEST(GreedyDecode, StopsAtEos) {
  ModelConfig c = tiny_config();
  Model m = build_model(c, 27);
  Tensor head({c.vocab, c.d_model});
  m.store.at(m.head).value = head;
  m.store.at(m.head).value.at(c.eos_id, 0) = 1e-300;  // any positive hidden[0] prefers eos
  // Bias the residual stream so hidden[0] > 0 everywhere.
  for (std::size_t r = 0; r < c.max_len; ++r) m.store.at(m.pos_embed).value.at(r, 0) = 1e6;
  SequenceInput prompt{std::nullopt, {5, 6}, 2};
  EXPECT_TRUE(greedy_decode(m, prompt, 4).empty());
}

// ---- tokenizer and checkpoints ---------------------------------------------

TEST(Tokenizer, TrainingSequenceLayout) {
  ModelConfig c;
  SequenceInput s = make_training_sequence(c, std::nullopt, "hi", "ok");
  EXPECT_EQ(s.text, (std::vector<std::size_t>{'h', 'i', c.sep_id, 'o', 'k', c.eos_id}));
  EXPECT_EQ(s.response_start, 3u);
  EXPECT_EQ(decode_bytes(s.text), "hiok");
  EXPECT_EQ(decode_bytes(encode_bytes("caf\xc3\xa9")), "caf\xc3\xa9");
}

TEST(Checkpoint, RoundTripRestoresEveryValue) {
  const auto dir = std::filesystem::temp_directory_path() / "echomoe_ckpt_roundtrip";
  std::filesystem::remove_all(dir);
  ModelConfig c = tiny_config();
  Model a = build_model(c, 28);
  save_checkpoint(dir, a.store, nlohmann::json{{"model", c}}, 28);
  Model b = build_model(c, 29);
  nlohmann::json manifest = load_checkpoint(dir, b.store);
  EXPECT_EQ(manifest["seed"], 28);
  EXPECT_EQ(manifest["config"]["model"], nlohmann::json(c));
  for (ParamId id = 0; id < a.store.size(); ++id) {
    EXPECT_EQ(a.store.value(id), b.store.value(id));
    EXPECT_EQ(a.store.frozen(id), b.store.frozen(id));
  }
  auto all = [](const Parameter&) { return true; };
  EXPECT_EQ(parameter_digest(a.store, all), parameter_digest(b.store, all));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, StageOneCheckpointLoadsIntoAdaptedModel) {
  const auto dir = std::filesystem::temp_directory_path() / "echomoe_ckpt_adapters";
  std::filesystem::remove_all(dir);
  ModelConfig c = tiny_config();
  Model a = build_model(c, 30);
  save_checkpoint(dir, a.store, {}, 30);
  Model b = build_model(c, 31);
  attach_lora(b, {2, 4.0, 0.05}, 31);
  EXPECT_NO_THROW(load_checkpoint(dir, b.store));
  // The reverse direction lacks a parameter.
  save_checkpoint(dir, b.store, {}, 31);
  Model plain = build_model(c, 32);
  EXPECT_THROW(load_checkpoint(dir, plain.store), DataError);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, ShapeMismatchAndCorruptionAreDataErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "echomoe_ckpt_mismatch";
  std::filesystem::remove_all(dir);
  ModelConfig c = tiny_config();
  save_checkpoint(dir, build_model(c, 33).store, {}, 33);
  ModelConfig wider = c;
  wider.ffn_hidden = 12;
  Model w = build_model(wider, 33);
  EXPECT_THROW(load_checkpoint(dir, w.store), DataError);

  {
    std::fstream f(dir / kParamsFile, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    f.put('\x7f');
  }
  Model same = build_model(c, 34);
  EXPECT_THROW(load_checkpoint(dir, same.store), DataError);
  EXPECT_THROW(load_checkpoint(dir / "missing", same.store), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, DigestIsSha256) {
  const std::string abc = "abc";
  EXPECT_EQ(sha256_hex({reinterpret_cast<const unsigned char*>(abc.data()), abc.size()}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
