// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>

#include "echomoe/cli/commands.hpp"

namespace cli = echomoe::cli;
namespace fs = std::filesystem;

namespace {

// Flags shared by the commands that build a model from a run config.
struct RunFlags {
  std::optional<std::string> config;
  std::optional<std::string> seed;
  std::optional<std::string> captions;
  std::optional<std::string> output_dir;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "Run config JSON");
    app->add_option("--seed", seed, "Overrides the config seed and ECHO_MOE_SEED");
    app->add_option("--captions", captions, "Training captions.jsonl");
    app->add_option("--output-dir", output_dir, "Directory for checkpoints and outputs");
  }

  cli::RunConfig resolve() const {
    cli::RunConfig c =
        cli::load_run_config(config ? std::optional<fs::path>(*config) : std::nullopt);
    if (seed) c.seed = cli::parse_seed(*seed);
    if (captions) c.captions = *captions;
    if (output_dir) c.output_dir = *output_dir;
    c.validate();
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-path MoE multimodal trainer (desk scale)", "echo_moe"};
  app.require_subcommand(1);
  int rc = cli::kExitOk;

  // synth
  auto* synth =
      app.add_subcommand("synth", "Generate the synthetic caption and instruction corpora");
  cli::SynthOptions synth_opts;
  std::optional<std::string> synth_config, synth_seed;
  std::string synth_out = "corpus";
  std::optional<std::size_t> synth_side, synth_channels, synth_patch;
  synth->add_option("--config", synth_config, "Run config; supplies seed and image geometry");
  synth->add_option("--out", synth_out, "Corpus directory")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--count", synth_opts.count, "Caption pairs")->capture_default_str();
  synth->add_option("--image-side", synth_side, "Image side in pixels");
  synth->add_option("--channels", synth_channels, "Image channels");
  synth->add_option("--patch", synth_patch, "Patch size the images must tile");
  synth->add_option("--instructions", synth_opts.instructions,
                    "Instruction records (default: --count)");
  synth
      ->add_option("--duplicate-rate", synth_opts.duplicate_rate,
                   "Share of planted near-duplicates")
      ->capture_default_str();
  synth->callback([&] {
    rc = cli::run_command("synth", std::cerr, [&] {
      const auto c = cli::load_run_config(synth_config ? std::optional<fs::path>(*synth_config)
                                                       : std::nullopt);
      synth_opts.out_dir = synth_out;
      synth_opts.seed = synth_seed ? cli::parse_seed(*synth_seed) : c.seed;
      synth_opts.image_side = synth_side.value_or(c.model.image_side);
      synth_opts.channels = synth_channels.value_or(c.model.channels);
      synth_opts.patch = synth_patch.value_or(c.model.patch);
      cli::cmd_synth(synth_opts, std::cout);
    });
  });

  // train
  auto* train = app.add_subcommand("train", "Run one training stage");
  RunFlags train_run;
  std::string stage = "I";
  std::optional<std::string> from_checkpoint, checkpoint_dir;
  train_run.add_to(train);
  train->add_option("--stage", stage, "I (MoE additions) or II (MoE additions + LoRA)")
      ->capture_default_str();
  train->add_option("--from-checkpoint", from_checkpoint, "Stage I checkpoint (stage II only)");
  train->add_option("--checkpoint-dir", checkpoint_dir, "Where to write the checkpoint");
  train->callback([&] {
    rc = cli::run_command("train", std::cerr, [&] {
      cli::TrainCommand cmd;
      cmd.config = train_run.resolve();
      cmd.stage = echomoe::train::parse_stage(stage);
      if (from_checkpoint) cmd.from_checkpoint = *from_checkpoint;
      if (checkpoint_dir) cmd.checkpoint_dir = *checkpoint_dir;
      cli::cmd_train(cmd, std::cout);
    });
  });

  // decode
  auto* decode = app.add_subcommand("decode", "Greedy generation for a prompt file");
  RunFlags decode_run;
  std::string decode_ckpt, decode_prompts;
  std::optional<std::string> decode_out;
  std::optional<std::size_t> max_new;
  decode_run.add_to(decode);
  decode->add_option("--checkpoint", decode_ckpt, "Checkpoint directory")->required();
  decode->add_option("--prompts", decode_prompts, "Prompt JSONL (id, image, prompt)")->required();
  decode->add_option("--out", decode_out, "Prediction file (default <output-dir>/predictions.txt)");
  decode->add_option("--max-new", max_new, "Generation limit per prompt");
  decode->callback([&] {
    rc = cli::run_command("decode", std::cerr, [&] {
      cli::DecodeCommand cmd;
      cmd.config = decode_run.resolve();
      cmd.checkpoint = decode_ckpt;
      cmd.prompts = decode_prompts;
      if (decode_out) cmd.out_file = *decode_out;
      cmd.max_new = max_new;
      cli::cmd_decode(cmd, std::cout);
    });
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Score predictions against references");
  cli::EvalCommand eval_cmd;
  std::string pred, ref;
  std::optional<std::string> tags, eval_out;
  eval->add_option("--pred", pred, "Predictions, one per line")->required();
  eval->add_option("--ref", ref, "References, one per line")->required();
  eval->add_option("--tags", tags, "Tag per line");
  eval->add_option("--expect-tag", eval_cmd.expected_tags, "Tag that must appear (repeatable)");
  eval->add_option("--out", eval_out, "CSV report");
  bool char_tokens = false;
  eval->add_flag("--char-tokens", char_tokens, "Score over characters instead of words");
  eval->callback([&] {
    rc = cli::run_command("eval", std::cerr, [&] {
      eval_cmd.predictions = pred;
      eval_cmd.references = ref;
      if (tags) eval_cmd.tags = *tags;
      if (eval_out) eval_cmd.out_csv = *eval_out;
      if (char_tokens) eval_cmd.mode = echomoe::textpipe::TokenMode::Character;
      cli::cmd_eval(eval_cmd, std::cout);
    });
  });

  // dedup
  auto* dedup = app.add_subcommand("dedup", "Remove near-duplicate instruction records");
  cli::DedupCommand dedup_cmd;
  std::string dedup_in, dedup_out;
  std::optional<std::string> rejected, report;
  dedup->add_option("--in", dedup_in, "Input JSONL")->required();
  dedup->add_option("--out", dedup_out, "Accepted records JSONL")->required();
  dedup->add_option("--rejected", rejected, "Rejected records JSONL");
  dedup->add_option("--report", report, "JSON summary");
  dedup->add_option("--rouge", dedup_cmd.thresholds.rouge, "Reject when ROUGE-L exceeds this")
      ->capture_default_str();
  dedup
      ->add_option("--hamming", dedup_cmd.thresholds.hamming,
                   "Reject when the Simhash distance is at most this")
      ->capture_default_str();
  dedup->callback([&] {
    rc = cli::run_command("dedup", std::cerr, [&] {
      dedup_cmd.input = dedup_in;
      dedup_cmd.output = dedup_out;
      if (rejected) dedup_cmd.rejected = *rejected;
      if (report) dedup_cmd.report = *report;
      cli::cmd_dedup(dedup_cmd, std::cout);
    });
  });

  // route-stats
  auto* route = app.add_subcommand("route-stats", "Per-layer expert dispatch statistics as CSV");
  RunFlags route_run;
  std::string route_ckpt, route_corpus;
  std::optional<std::string> route_out;
  route_run.add_to(route);
  route->add_option("--checkpoint", route_ckpt, "Checkpoint directory")->required();
  route->add_option("--corpus", route_corpus, "captions.jsonl or prompts.jsonl")->required();
  route->add_option("--out", route_out, "CSV path (default <output-dir>/route_stats.csv)");
  route->callback([&] {
    rc = cli::run_command("route-stats", std::cerr, [&] {
      cli::RouteStatsCommand cmd;
      cmd.config = route_run.resolve();
      cmd.checkpoint = route_ckpt;
      cmd.corpus = route_corpus;
      if (route_out) cmd.out_csv = *route_out;
      cli::cmd_route_stats(cmd, std::cout);
    });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? cli::kExitOk : cli::kExitUsage;
  }
  return rc;
}
