// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "echomoe/cli/config.hpp"
#include "echomoe/model/model.hpp"
#include "echomoe/textpipe/dedup.hpp"

namespace echomoe::cli {

namespace fs = std::filesystem;

/// Process exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitInvariant = 1, kExitUsage = 2 };

/// A checked property of a command's output did not hold.
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs `body`, reporting any exception on `err` and mapping it to an exit
/// code: InvariantError and TrainingError give 1, every other error 2.
int run_command(const std::string& name, std::ostream& err, const std::function<void()>& body);

// ---- corpus files ------------------------------------------------------------

inline constexpr const char* kCorpusManifest = "corpus.json";
inline constexpr const char* kCaptionsFile = "captions.jsonl";
inline constexpr const char* kPromptsFile = "prompts.jsonl";
inline constexpr const char* kReferencesFile = "references.txt";
inline constexpr const char* kTagsFile = "tags.txt";
inline constexpr const char* kInstructionsFile = "instructions.jsonl";
inline constexpr const char* kTruthFile = "instructions_truth.jsonl";
/// Text prompt paired with every synthetic image.
inline constexpr const char* kCaptionPrompt = "describe";

/// One line of captions.jsonl or prompts.jsonl. Image paths are relative to
/// the file's directory.
struct CaptionEntry {
  std::string id;
  std::optional<fs::path> image;
  std::string prompt;
  std::string caption;  // empty in prompt files
  std::string tag;
  std::size_t line = 0;  // 1-based line in the source file
};

/// Parses a captions or prompts file. Blank lines are skipped; malformed
/// lines raise DataError naming the line.
std::vector<CaptionEntry> read_caption_file(const fs::path& path);

/// Loads the image of `entry` (resolved against `base`) and checks its shape.
std::optional<Tensor> load_entry_image(const CaptionEntry& entry, const fs::path& base,
                                       const model::ModelConfig& config);

/// Builds the model described by `config`, attaches adapters when the
/// checkpoint holds any, and loads the checkpoint.
model::Model load_model(const RunConfig& config, const fs::path& checkpoint);

// ---- subcommands -------------------------------------------------------------

struct SynthOptions {
  fs::path out_dir = "corpus";
  std::uint64_t seed = 0;
  std::size_t count = 50;
  std::size_t image_side = 28;
  std::size_t channels = 3;
  std::size_t patch = 7;
  /// Instruction records; defaults to `count` when unset.
  std::optional<std::size_t> instructions;
  double duplicate_rate = 0.1;
};

/// Writes corpus.json, captions.jsonl with images/, prompts.jsonl,
/// references.txt, tags.txt, instructions.jsonl and instructions_truth.jsonl.
void cmd_synth(const SynthOptions& options, std::ostream& out);

struct TrainCommand {
  RunConfig config;
  train::Stage stage = train::Stage::I;
  std::optional<fs::path> from_checkpoint;
  /// Defaults to <output_dir>/stage1 or /stage2.
  std::optional<fs::path> checkpoint_dir;
};

/// Trains one stage and writes params.bin, manifest.json and
/// train_log.jsonl into the checkpoint directory.
void cmd_train(const TrainCommand& command, std::ostream& out);

struct DecodeCommand {
  RunConfig config;
  fs::path checkpoint;
  fs::path prompts;
  /// Defaults to <output_dir>/predictions.txt.
  std::optional<fs::path> out_file;
  /// Defaults to whatever fits under max_len.
  std::optional<std::size_t> max_new;
};

/// One generated line per prompt, written to `out` and to the output file.
/// Line breaks in generated text become spaces.
void cmd_decode(const DecodeCommand& command, std::ostream& out);

struct EvalCommand {
  fs::path predictions;
  fs::path references;
  std::optional<fs::path> tags;
  std::vector<std::string> expected_tags;
  std::optional<fs::path> out_csv;
  textpipe::TokenMode mode = textpipe::TokenMode::Word;
};

/// Metric table on `out`, CSV to out_csv.
void cmd_eval(const EvalCommand& command, std::ostream& out);

struct DedupCommand {
  fs::path input;
  fs::path output;
  /// Defaults to <output stem>.rejected.jsonl next to the output.
  std::optional<fs::path> rejected;
  std::optional<fs::path> report;
  textpipe::DedupThresholds thresholds;
};

void cmd_dedup(const DedupCommand& command, std::ostream& out);

struct RouteStatsCommand {
  RunConfig config;
  fs::path checkpoint;
  fs::path corpus;
  /// Defaults to <output_dir>/route_stats.csv.
  std::optional<fs::path> out_csv;
};

/// CSV with columns layer,expert,F,G,F_image,F_text, one row per layer and
/// expert, pooled over every sequence of the corpus. Σ_e F_e = k is checked
/// per layer before anything is written.
void cmd_route_stats(const RouteStatsCommand& command, std::ostream& out);

}  // namespace echomoe::cli
