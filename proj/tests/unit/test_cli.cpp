// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "echomoe/cli/commands.hpp"
#include "echomoe/cli/synth.hpp"
#include "echomoe/errors.hpp"
#include "echomoe/model/checkpoint.hpp"
#include "echomoe/textpipe/dedup.hpp"

using namespace echomoe;
using namespace echomoe::cli;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t line_count(const fs::path& path) {
  const std::string s = slurp(path);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

void put(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary) << text;
}

// Small byte-vocabulary model on 8×8×3 images: 4 visual tokens.
RunConfig small_run(const fs::path& root) {
  RunConfig c;
  c.model.d_model = 16;
  c.model.heads = 2;
  c.model.image_side = 8;
  c.model.patch = 2;
  c.model.vision_dim = 8;
  c.model.merge_dim = 8;
  c.model.projector_hidden = 16;
  c.model.ffn_hidden = 16;
  c.model.expert_hidden = 8;
  c.model.shared_hidden = 16;
  c.model.max_len = 64;
  c.lora.rank = 2;
  c.stage1.epochs = 1;
  c.stage2.epochs = 1;
  c.seed = 11;
  c.captions = root / "corpus" / kCaptionsFile;
  c.output_dir = root / "out";
  return c;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            (std::string("echomoe_cli_") +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
    ::unsetenv(kSeedEnv);
  }
  void TearDown() override { fs::remove_all(root_); }

  int run(const std::string& name, const std::function<void()>& body) {
    err_.str("");
    return run_command(name, err_, body);
  }

  void synth(std::size_t count, std::size_t instructions = 20) {
    SynthOptions o;
    o.out_dir = root_ / "corpus";
    o.seed = 5;
    o.count = count;
    o.image_side = 8;
    o.patch = 2;
    o.instructions = instructions;
    std::ostringstream out;
    cmd_synth(o, out);
  }

  fs::path root_;
  std::ostringstream err_;
};

// ---- config ------------------------------------------------------------------

TEST(RunConfigTest, JsonRoundTrip) {
  RunConfig c = small_run("/tmp/x");
  c.stage1.gamma = 0.02;
  const nlohmann::json j = c;
  const RunConfig back = j.get<RunConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
}

TEST(RunConfigTest, UnknownKeysRejected) {
  EXPECT_THROW(nlohmann::json({{"sed", 1}}).get<RunConfig>(), ConfigError);
  EXPECT_THROW(nlohmann::json({{"lora", {{"rnk", 2}}}}).get<RunConfig>(), ConfigError);
  EXPECT_THROW(nlohmann::json({{"seed", -1}}).get<RunConfig>(), ConfigError);
}

TEST(RunConfigTest, DeskDefaults) {
  const RunConfig c;
  EXPECT_EQ(c.stage1.epochs, 200u);
  EXPECT_EQ(c.stage2.epochs, 100u);
  EXPECT_DOUBLE_EQ(c.plan(train::Stage::I).lr_peak, 1e-3);
  EXPECT_DOUBLE_EQ(c.plan(train::Stage::II).lr_peak, 2e-5);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfigTest, PlanCarriesRunSeed) {
  RunConfig c;
  c.seed = 99;
  c.stage1.seed = 3;
  EXPECT_EQ(c.plan(train::Stage::I).seed, 99u);
  EXPECT_EQ(c.plan(train::Stage::II).stage, train::Stage::II);
}

TEST(RunConfigTest, ParseSeed) {
  EXPECT_EQ(parse_seed("18446744073709551615"), 18446744073709551615ull);
  EXPECT_THROW(parse_seed(""), ConfigError);
  EXPECT_THROW(parse_seed("12x"), ConfigError);
  EXPECT_THROW(parse_seed("-1"), ConfigError);
  EXPECT_THROW(parse_seed("18446744073709551616"), ConfigError);
}

TEST_F(CliTest, ConfigFileResolvesPathsAndEnvOverridesSeed) {
  put(root_ / "run.json", R"({"seed": 4, "captions": "c/captions.jsonl", "output_dir": "o"})");
  RunConfig c = load_run_config(root_ / "run.json");
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.captions, root_ / "c/captions.jsonl");
  EXPECT_EQ(c.output_dir, root_ / "o");

  ::setenv(kSeedEnv, "77", 1);
  EXPECT_EQ(load_run_config(root_ / "run.json").seed, 77u);
  EXPECT_EQ(load_run_config(std::nullopt).seed, 77u);
  ::setenv(kSeedEnv, "seven", 1);
  EXPECT_THROW(load_run_config(std::nullopt), ConfigError);
  ::unsetenv(kSeedEnv);
}

TEST_F(CliTest, ConfigFileErrors) {
  EXPECT_THROW(load_run_config(root_ / "missing.json"), IoError);
  put(root_ / "bad.json", "{");
  EXPECT_THROW(load_run_config(root_ / "bad.json"), ConfigError);
  put(root_ / "geom.json", R"({"model": {"d_model": 30, "heads": 4}})");
  EXPECT_THROW(load_run_config(root_ / "geom.json"), ConfigError);
}

// ---- exit codes ------------------------------------------------------------------

TEST_F(CliTest, RunCommandMapsErrorsToExitCodes) {
  EXPECT_EQ(run("x", [] {}), kExitOk);
  EXPECT_EQ(run("x", [] { throw ConfigError("c"); }), kExitUsage);
  EXPECT_EQ(run("x", [] { throw DataError("d"); }), kExitUsage);
  EXPECT_EQ(run("x", [] { throw IoError("i"); }), kExitUsage);
  EXPECT_EQ(run("x", [] { throw ContractError("u"); }), kExitUsage);
  EXPECT_EQ(run("x", [] { throw InvariantError("inv"); }), kExitInvariant);
  EXPECT_EQ(run("x", [] { throw TrainingError("t"); }), kExitInvariant);
  EXPECT_NE(err_.str().find("echo-moe x: t"), std::string::npos);
}

// ---- synth -----------------------------------------------------------------------

TEST(SynthTest, ImageRoundTripStoresFloat32) {
  const auto path = fs::temp_directory_path() / "echomoe_image_roundtrip.emi";
  Tensor img({2, 3, 3});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = 0.1 * static_cast<double>(i);
  write_image(path, img);
  EXPECT_EQ(fs::file_size(path), 16u + 4u * img.size());
  const Tensor back = read_image(path);
  ASSERT_EQ(back.shape(), img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) {
    EXPECT_EQ(back[i], static_cast<double>(static_cast<float>(img[i])));
  }
  std::ofstream(path, std::ios::binary) << "EMI0xxxxxxxxxxxx";
  EXPECT_THROW(read_image(path), DataError);
  fs::remove(path);
  EXPECT_THROW(read_image(path), IoError);
}

TEST(SynthTest, CaptionDescribesThePlantedBlock) {
  const auto samples = synth_captions(8, 40, 16, 3);
  ASSERT_EQ(samples.size(), 40u);
  for (const auto& s : samples) {
    EXPECT_EQ(s.caption, caption_for(s.features));
    // The block is the only bright region; its mass sits in the named
    // quadrant of the named channel.
    double quad[4] = {0, 0, 0, 0};
    for (std::size_t y = 0; y < 16; ++y) {
      for (std::size_t x = 0; x < 16; ++x) {
        const double v = s.image[(y * 16 + x) * 3 + s.features.colour];
        if (v > 0.5) quad[(y >= 8) * 2 + (x >= 8)] += v;
      }
    }
    const auto best = std::max_element(quad, quad + 4) - quad;
    EXPECT_EQ(static_cast<std::size_t>(best), s.features.quadrant) << s.id;
  }
  EXPECT_EQ(caption_for({1, 2, 3}), "a large blue block in the bottom right");
}

TEST(SynthTest, GeometryErrors) {
  EXPECT_THROW(synth_captions(1, 1, 10, 3), ConfigError);
  EXPECT_THROW(synth_captions(1, 1, 16, 1), ConfigError);
  EXPECT_THROW(synth_instructions(1, 10, 1.0), ConfigError);
}

TEST(SynthTest, PlantedDuplicatesPointBackwards) {
  const auto corpus = synth_instructions(3, 100, 0.1);
  ASSERT_EQ(corpus.records.size(), 100u);
  ASSERT_EQ(corpus.planted.size(), 10u);
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) pos[corpus.records[i].id] = i;
  for (const auto& d : corpus.planted) {
    ASSERT_TRUE(pos.count(d.id) && pos.count(d.source_id));
    EXPECT_LT(pos[d.source_id], pos[d.id]);
  }
}

TEST_F(CliTest, SynthIsByteDeterministic) {
  SynthOptions o;
  o.seed = 21;
  o.count = 6;
  o.image_side = 8;
  o.patch = 2;
  std::ostringstream out;
  o.out_dir = root_ / "a";
  cmd_synth(o, out);
  o.out_dir = root_ / "b";
  cmd_synth(o, out);
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root_ / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), root_ / "a");
    EXPECT_EQ(slurp(entry.path()), slurp(root_ / "b" / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 7u + 6u);
}

TEST_F(CliTest, SynthZeroCountWritesEmptyFilesWithHeader) {
  synth(0, 0);
  for (const char* f :
       {kCaptionsFile, kPromptsFile, kReferencesFile, kTagsFile, kInstructionsFile, kTruthFile}) {
    ASSERT_TRUE(fs::exists(root_ / "corpus" / f)) << f;
    EXPECT_EQ(fs::file_size(root_ / "corpus" / f), 0u) << f;
  }
  const auto manifest = nlohmann::json::parse(slurp(root_ / "corpus" / kCorpusManifest));
  EXPECT_EQ(manifest.at("format"), "echo-moe-corpus");
  EXPECT_EQ(manifest.at("captions").at("count"), 0);
  EXPECT_EQ(manifest.at("instructions").at("planted"), 0);
}

TEST_F(CliTest, SynthDuplicateRateBookkeeping) {
  synth(2, 100);
  EXPECT_EQ(line_count(root_ / "corpus" / kInstructionsFile), 100u);
  EXPECT_EQ(line_count(root_ / "corpus" / kTruthFile), 10u);
  const auto manifest = nlohmann::json::parse(slurp(root_ / "corpus" / kCorpusManifest));
  EXPECT_EQ(manifest.at("instructions").at("planted"), 10);
}

TEST_F(CliTest, SynthRejectsSideNotTilingPatchPairs) {
  SynthOptions o;
  o.out_dir = root_ / "c";
  o.image_side = 28;
  o.patch = 5;
  std::ostringstream out;
  EXPECT_EQ(run("synth", [&] { cmd_synth(o, out); }), kExitUsage);
  EXPECT_FALSE(fs::exists(o.out_dir));
}

TEST_F(CliTest, CaptionFileErrorsNameTheLine) {
  put(root_ / "p.jsonl", "{\"id\":\"a\",\"prompt\":\"x\"}\n\n{\"id\":\"b\"}\n");
  try {
    read_caption_file(root_ / "p.jsonl");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

// ---- train / decode / route-stats ------------------------------------------------

TEST_F(CliTest, StageTwoNeedsCheckpoint) {
  synth(4);
  TrainCommand cmd{small_run(root_), train::Stage::II, std::nullopt, std::nullopt};
  std::ostringstream out;
  EXPECT_EQ(run("train", [&] { cmd_train(cmd, out); }), kExitUsage);
  EXPECT_NE(err_.str().find("--from-checkpoint"), std::string::npos);
  cmd.from_checkpoint = root_ / "nowhere";
  EXPECT_EQ(run("train", [&] { cmd_train(cmd, out); }), kExitUsage);
}

TEST_F(CliTest, StageOneKeepsBaseHashAndStageTwoKeepsStaticFfn) {
  synth(6);
  const RunConfig cfg = small_run(root_);
  const auto base_digest = [](const ParameterStore& s, bool include_static) {
    return model::parameter_digest(s, [&](const Parameter& p) {
      const auto role = train::classify(p.name);
      return role == train::Role::Base || (include_static && role == train::Role::StaticFfn);
    });
  };
  const std::string fresh = base_digest(model::build_model(cfg.model, cfg.seed).store, true);

  std::ostringstream out;
  ASSERT_EQ(run("train", [&] { cmd_train({cfg, train::Stage::I, {}, {}}, out); }), kExitOk)
      << err_.str();
  const auto stage1 = load_model(cfg, cfg.output_dir / "stage1");
  EXPECT_EQ(base_digest(stage1.store, true), fresh);
  EXPECT_TRUE(fs::exists(cfg.output_dir / "stage1" / "train_log.jsonl"));

  ASSERT_EQ(
      run("train", [&] { cmd_train({cfg, train::Stage::II, cfg.output_dir / "stage1", {}}, out); }),
      kExitOk)
      << err_.str();
  const auto stage2 = load_model(cfg, cfg.output_dir / "stage2");
  EXPECT_FALSE(stage2.adapters.empty());
  EXPECT_EQ(base_digest(stage2.store, true), fresh);

  // The manifest echoes the run config and the stage plan.
  const auto manifest = model::read_manifest(cfg.output_dir / "stage2");
  EXPECT_EQ(manifest.at("config").at("run"), nlohmann::json(cfg));
  EXPECT_EQ(manifest.at("config").at("train").at("stage"), "II");

  // Stage II cannot start from an adapted checkpoint.
  EXPECT_EQ(run("train",
                [&] {
                  cmd_train({cfg, train::Stage::II, cfg.output_dir / "stage2", root_ / "again"},
                            out);
                }),
            kExitUsage);
}

TEST_F(CliTest, DecodeIsRepeatableAndChecksInputs) {
  synth(3);
  RunConfig cfg = small_run(root_);
  std::ostringstream out;
  ASSERT_EQ(run("train", [&] { cmd_train({cfg, train::Stage::I, {}, {}}, out); }), kExitOk);

  DecodeCommand cmd{cfg, cfg.output_dir / "stage1", root_ / "corpus" / kPromptsFile,
                    root_ / "p1.txt", 12};
  std::ostringstream first, second;
  ASSERT_EQ(run("decode", [&] { cmd_decode(cmd, first); }), kExitOk) << err_.str();
  cmd.out_file = root_ / "p2.txt";
  ASSERT_EQ(run("decode", [&] { cmd_decode(cmd, second); }), kExitOk);
  EXPECT_EQ(first.str(), second.str());
  EXPECT_EQ(slurp(root_ / "p1.txt"), first.str());
  EXPECT_EQ(line_count(root_ / "p1.txt"), 3u);

  put(root_ / "empty.jsonl", "{\"id\":\"a\",\"prompt\":\"ok\"}\n{\"id\":\"b\",\"prompt\":\"\"}\n");
  cmd.prompts = root_ / "empty.jsonl";
  EXPECT_EQ(run("decode", [&] { cmd_decode(cmd, out); }), kExitUsage);
  EXPECT_NE(err_.str().find("line 2: empty prompt"), std::string::npos) << err_.str();

  cmd.prompts = root_ / "corpus" / kPromptsFile;
  cmd.config.model.d_model = 32;
  EXPECT_EQ(run("decode", [&] { cmd_decode(cmd, out); }), kExitUsage);
}

TEST_F(CliTest, RouteStatsShapeAndUniformFreshRouter) {
  synth(12);
  RunConfig cfg = small_run(root_);
  const auto fresh = model::build_model(cfg.model, cfg.seed);
  model::save_checkpoint(root_ / "fresh", fresh.store, nlohmann::json::object(), cfg.seed);

  RouteStatsCommand cmd{cfg, root_ / "fresh", root_ / "corpus" / kCaptionsFile, root_ / "r.csv"};
  std::ostringstream out;
  ASSERT_EQ(run("route-stats", [&] { cmd_route_stats(cmd, out); }), kExitOk) << err_.str();
  std::istringstream csv(slurp(root_ / "r.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "layer,expert,F,G,F_image,F_text");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    double f = 0, g = 0;
    std::size_t layer = 0, expert = 0;
    ASSERT_EQ(std::sscanf(line.c_str(), "%zu,%zu,%lf,%lf", &layer, &expert, &f, &g), 4);
    // A fresh router (std 0.02 weights) is close to uniform: F ≈ k/E, G ≈ 1/E.
    EXPECT_NEAR(f, 0.5, 0.25) << line;
    EXPECT_NEAR(g, 0.25, 0.01) << line;
    ++rows;
  }
  EXPECT_EQ(rows, cfg.model.blocks * cfg.model.experts);
}

TEST_F(CliTest, RouteStatsSingleExpert) {
  synth(3);
  RunConfig cfg = small_run(root_);
  cfg.model.experts = 1;
  cfg.model.top_k = 1;
  const auto fresh = model::build_model(cfg.model, cfg.seed);
  model::save_checkpoint(root_ / "one", fresh.store, nlohmann::json::object(), cfg.seed);
  RouteStatsCommand cmd{cfg, root_ / "one", root_ / "corpus" / kCaptionsFile, root_ / "r.csv"};
  std::ostringstream out;
  ASSERT_EQ(run("route-stats", [&] { cmd_route_stats(cmd, out); }), kExitOk) << err_.str();
  EXPECT_EQ(slurp(root_ / "r.csv"),
            "layer,expert,F,G,F_image,F_text\n"
            "0,0,1.000000,1.000000,1.000000,1.000000\n"
            "1,0,1.000000,1.000000,1.000000,1.000000\n");
}

// ---- eval ----------------------------------------------------------------------------

TEST_F(CliTest, EvalIdenticalFilesAndMismatch) {
  put(root_ / "ref.txt", "the cat sat on the mat\na red block\n");
  put(root_ / "tags.txt", "x\ny\n");
  EvalCommand cmd{root_ / "ref.txt", root_ / "ref.txt", root_ / "tags.txt", {"z"}, root_ / "e.csv"};
  std::ostringstream out;
  ASSERT_EQ(run("eval", [&] { cmd_eval(cmd, out); }), kExitOk) << err_.str();
  const std::string csv = slurp(root_ / "e.csv");
  EXPECT_NE(csv.find("x,1,100.00,100.00,100.00,"), std::string::npos) << csv;
  EXPECT_NE(csv.find("z,0,"), std::string::npos) << csv;

  put(root_ / "short.txt", "the cat\n");
  cmd.predictions = root_ / "short.txt";
  EXPECT_EQ(run("eval", [&] { cmd_eval(cmd, out); }), kExitUsage);
  EXPECT_NE(err_.str().find("1 predictions but 2 references"), std::string::npos);
}

// ---- dedup ---------------------------------------------------------------------------

TEST_F(CliTest, DedupRejectsPlantedSet) {
  synth(1, 200);
  DedupCommand cmd{root_ / "corpus" / kInstructionsFile,
                   root_ / "acc.jsonl",
                   std::nullopt,
                   root_ / "report.json",
                   {}};
  std::ostringstream out;
  ASSERT_EQ(run("dedup", [&] { cmd_dedup(cmd, out); }), kExitOk) << err_.str();
  EXPECT_NE(out.str().find("rouge_l > 0.7, hamming <= 3"), std::string::npos);

  std::set<std::string> truth, rejected;
  std::istringstream t(slurp(root_ / "corpus" / kTruthFile)),
      r(slurp(root_ / "acc.rejected.jsonl"));
  for (std::string line; std::getline(t, line);) truth.insert(nlohmann::json::parse(line).at("id"));
  for (std::string line; std::getline(r, line);)
    rejected.insert(nlohmann::json::parse(line).at("id"));
  EXPECT_EQ(rejected, truth);
  EXPECT_EQ(line_count(root_ / "acc.jsonl"), 200u - truth.size());

  const auto report = nlohmann::json::parse(slurp(root_ / "report.json"));
  EXPECT_EQ(report.at("thresholds").at("rouge"), 0.7);
  EXPECT_EQ(report.at("thresholds").at("hamming"), 3);
}

TEST_F(CliTest, DedupEmptyInputAndMalformedLine) {
  put(root_ / "empty.jsonl", "");
  DedupCommand cmd{
      root_ / "empty.jsonl", root_ / "acc.jsonl", root_ / "rej.jsonl", std::nullopt, {}};
  std::ostringstream out;
  ASSERT_EQ(run("dedup", [&] { cmd_dedup(cmd, out); }), kExitOk);
  EXPECT_EQ(fs::file_size(root_ / "acc.jsonl"), 0u);
  EXPECT_EQ(fs::file_size(root_ / "rej.jsonl"), 0u);

  put(root_ / "bad.jsonl",
      R"({"id":"a","question":"q one","answer":"a one","template_class":"open","modality":"text","source":"s"})"
      "\nnot json\n");
  cmd.input = root_ / "bad.jsonl";
  EXPECT_EQ(run("dedup", [&] { cmd_dedup(cmd, out); }), kExitUsage);
  EXPECT_NE(err_.str().find("line 2"), std::string::npos) << err_.str();
}

}  // namespace
