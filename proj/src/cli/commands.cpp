// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/cli/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "echomoe/cli/synth.hpp"
#include "echomoe/errors.hpp"
#include "echomoe/metrics/metrics.hpp"
#include "echomoe/model/checkpoint.hpp"
#include "echomoe/model/tokenizer.hpp"
#include "echomoe/moe/routing.hpp"

namespace echomoe::cli {
namespace {

void make_dirs(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_file(const fs::path& path, const std::string& content) {
  make_dirs(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(content.data(), static_cast<std::streamsize>(content.size()))) {
    throw IoError("cannot write " + path.string());
  }
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::uint64_t lora_seed(std::uint64_t seed) { return SplitMix64(seed).fork("lora").next_u64(); }

std::string optional_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return {};
  if (!j.at(key).is_string()) throw DataError(std::string("'") + key + "' must be a string");
  return j.at(key).get<std::string>();
}

model::SequenceInput sequence_for(const model::ModelConfig& config, const CaptionEntry& entry,
                                  std::optional<Tensor> image) {
  return entry.caption.empty()
             ? model::make_prompt(config, std::move(image), entry.prompt)
             : model::make_training_sequence(config, std::move(image), entry.prompt, entry.caption);
}

}  // namespace

int run_command(const std::string& name, std::ostream& err, const std::function<void()>& body) {
  auto report = [&](const std::exception& e) {
    err << "echo-moe " << name << ": " << e.what() << '\n';
  };
  try {
    body();
    return kExitOk;
  } catch (const InvariantError& e) {
    report(e);
    return kExitInvariant;
  } catch (const TrainingError& e) {
    report(e);
    return kExitInvariant;
  } catch (const ConfigError& e) {
    report(e);
  } catch (const DimensionError& e) {
    report(e);
  } catch (const DataError& e) {
    report(e);
  } catch (const ContractError& e) {
    report(e);
  } catch (const IoError& e) {
    report(e);
  } catch (const fs::filesystem_error& e) {
    report(e);
  } catch (const nlohmann::json::exception& e) {
    report(e);
  } catch (const std::exception& e) {
    report(e);
    return kExitInvariant;
  }
  return kExitUsage;
}

std::vector<CaptionEntry> read_caption_file(const fs::path& path) {
  const auto lines = read_lines(path);
  std::vector<CaptionEntry> entries;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (lines[n].find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = path.string() + " line " + std::to_string(n + 1) + ": ";
    try {
      const auto j = nlohmann::json::parse(lines[n]);
      if (!j.is_object()) throw DataError("expected a JSON object");
      CaptionEntry e;
      e.line = n + 1;
      e.id = optional_string(j, "id");
      if (e.id.empty()) throw DataError("missing 'id'");
      if (!j.contains("prompt")) throw DataError("missing 'prompt'");
      e.prompt = optional_string(j, "prompt");
      e.caption = optional_string(j, "caption");
      e.tag = optional_string(j, "tag");
      if (const auto image = optional_string(j, "image"); !image.empty()) e.image = image;
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + e.what());
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  return entries;
}

std::optional<Tensor> load_entry_image(const CaptionEntry& entry, const fs::path& base,
                                       const model::ModelConfig& config) {
  if (!entry.image) return std::nullopt;
  Tensor img = read_image(entry.image->is_absolute() ? *entry.image : base / *entry.image);
  const Shape want{config.image_side, config.image_side, config.channels};
  if (img.shape() != want) {
    throw DataError("image of " + entry.id + " has shape " + to_string(img.shape()) +
                    ", model expects " + to_string(want));
  }
  return img;
}

model::Model load_model(const RunConfig& config, const fs::path& checkpoint) {
  const auto manifest = model::read_manifest(checkpoint);
  bool adapted = false;
  for (const auto& p : manifest.at("params")) {
    adapted = adapted || p.at("name").get<std::string>().starts_with(lora::kPrefix);
  }
  model::Model m = model::build_model(config.model, config.seed);
  if (adapted) model::attach_lora(m, config.lora, lora_seed(config.seed));
  model::load_checkpoint(checkpoint, m.store);
  return m;
}

void cmd_synth(const SynthOptions& o, std::ostream& out) {
  if (o.patch == 0 || o.image_side == 0 || o.image_side % (2 * o.patch) != 0) {
    throw ConfigError("image side " + std::to_string(o.image_side) +
                      " must be a positive multiple of 2*patch = " + std::to_string(2 * o.patch));
  }
  const auto captions = synth_captions(o.seed, o.count, o.image_side, o.channels);
  const auto corpus =
      synth_instructions(o.seed, o.instructions.value_or(o.count), o.duplicate_rate);

  make_dirs(o.out_dir / "images");
  std::ostringstream caps, prompts, refs, tags;
  for (const auto& s : captions) {
    const std::string image = "images/" + s.id + ".emi";
    write_image(o.out_dir / image, s.image);
    const std::string tag = colour_name(s.features.colour);
    const nlohmann::json features = {{"size", size_name(s.features.size)},
                                     {"colour", tag},
                                     {"quadrant", quadrant_name(s.features.quadrant)}};
    caps << nlohmann::json{{"id", s.id},           {"image", image}, {"prompt", kCaptionPrompt},
                           {"caption", s.caption}, {"tag", tag},     {"features", features}}
                .dump()
         << '\n';
    prompts << nlohmann::json{{"id", s.id}, {"image", image}, {"prompt", kCaptionPrompt}}.dump()
            << '\n';
    refs << s.caption << '\n';
    tags << tag << '\n';
  }
  write_file(o.out_dir / kCaptionsFile, caps.str());
  write_file(o.out_dir / kPromptsFile, prompts.str());
  write_file(o.out_dir / kReferencesFile, refs.str());
  write_file(o.out_dir / kTagsFile, tags.str());

  std::ostringstream records, truth;
  textpipe::write_records(records, corpus.records);
  for (const auto& d : corpus.planted) {
    truth << nlohmann::json{{"id", d.id}, {"source_id", d.source_id}}.dump() << '\n';
  }
  write_file(o.out_dir / kInstructionsFile, records.str());
  write_file(o.out_dir / kTruthFile, truth.str());

  const nlohmann::json manifest = {{"format", "echo-moe-corpus"},
                                   {"version", 1},
                                   {"seed", o.seed},
                                   {"captions",
                                    {{"file", kCaptionsFile},
                                     {"prompts", kPromptsFile},
                                     {"references", kReferencesFile},
                                     {"tags", kTagsFile},
                                     {"count", captions.size()},
                                     {"image_side", o.image_side},
                                     {"channels", o.channels},
                                     {"prompt", kCaptionPrompt}}},
                                   {"instructions",
                                    {{"file", kInstructionsFile},
                                     {"truth", kTruthFile},
                                     {"count", corpus.records.size()},
                                     {"duplicate_rate", o.duplicate_rate},
                                     {"planted", corpus.planted.size()}}}};
  write_file(o.out_dir / kCorpusManifest, manifest.dump(2) + "\n");
  out << "synth: " << captions.size() << " captions, " << corpus.records.size() << " instructions ("
      << corpus.planted.size() << " planted duplicates) in " << o.out_dir.string() << '\n';
}

void cmd_train(const TrainCommand& command, std::ostream& out) {
  const RunConfig& cfg = command.config;
  cfg.validate();
  const bool stage2 = command.stage == train::Stage::II;
  if (stage2 && !command.from_checkpoint) {
    throw ContractError("stage II needs --from-checkpoint pointing at a stage I checkpoint");
  }
  if (!stage2 && command.from_checkpoint) {
    throw ContractError("--from-checkpoint only applies to stage II");
  }

  const auto entries = read_caption_file(cfg.captions);
  if (entries.empty()) throw DataError("no training pairs in " + cfg.captions.string());
  std::vector<model::SequenceInput> corpus;
  corpus.reserve(entries.size());
  for (const auto& e : entries) {
    if (e.caption.empty()) {
      throw DataError(cfg.captions.string() + " line " + std::to_string(e.line) +
                      ": training pair without caption");
    }
    corpus.push_back(
        sequence_for(cfg.model, e, load_entry_image(e, cfg.captions.parent_path(), cfg.model)));
  }

  model::Model m = model::build_model(cfg.model, cfg.seed);
  if (stage2) {
    model::attach_lora(m, cfg.lora, lora_seed(cfg.seed));
    const auto manifest = model::load_checkpoint(*command.from_checkpoint, m.store);
    for (const auto& p : manifest.at("params")) {
      if (p.at("name").get<std::string>().starts_with(lora::kPrefix)) {
        throw DataError(command.from_checkpoint->string() +
                        " already holds adapters; stage II starts from a stage I checkpoint");
      }
    }
  }

  const fs::path dir =
      command.checkpoint_dir.value_or(cfg.output_dir / (stage2 ? "stage2" : "stage1"));
  make_dirs(dir);
  train::TrainOptions opts;
  opts.log_path = dir / "train_log.jsonl";
  opts.checkpoint_dir = dir;
  opts.config_echo = {{"run", cfg}};
  const auto result = train::train_loop(m, cfg.plan(command.stage), corpus, opts);

  const auto& last = result.log.back();
  char line[160];
  std::snprintf(line, sizeof line, "stage %s: %zu steps, final ar_loss %.6f bal_loss %.6f",
                train::to_string(command.stage).c_str(), last.step, last.ar, last.bal);
  out << line << ", " << result.trainable_scalars << " trainable scalars, checkpoint "
      << dir.string() << '\n';
}

void cmd_decode(const DecodeCommand& command, std::ostream& out) {
  const RunConfig& cfg = command.config;
  const auto entries = read_caption_file(command.prompts);
  for (const auto& e : entries) {
    if (e.prompt.empty()) {
      throw DataError(command.prompts.string() + " line " + std::to_string(e.line) +
                      ": empty prompt");
    }
  }
  const model::Model m = load_model(cfg, command.checkpoint);

  std::string text;
  for (const auto& e : entries) {
    auto image = load_entry_image(e, command.prompts.parent_path(), cfg.model);
    const std::size_t visual = image ? cfg.model.visual_tokens() : 0;
    const auto prompt = model::make_prompt(cfg.model, std::move(image), e.prompt);
    const std::size_t used = visual + prompt.text.size();
    if (used >= cfg.model.max_len) {
      throw DataError(command.prompts.string() + " line " + std::to_string(e.line) +
                      ": prompt leaves no room under max_len");
    }
    const std::size_t room = cfg.model.max_len - used;
    std::string generated = model::decode_bytes(
        model::greedy_decode(m, prompt, std::min(room, command.max_new.value_or(room))));
    for (char& c : generated) {
      if (c == '\n' || c == '\r') c = ' ';
    }
    text += generated;
    text += '\n';
  }
  write_file(command.out_file.value_or(cfg.output_dir / "predictions.txt"), text);
  out << text;
}

void cmd_eval(const EvalCommand& command, std::ostream& out) {
  const auto preds = read_lines(command.predictions);
  const auto refs = read_lines(command.references);
  if (preds.size() != refs.size()) {
    throw DataError(std::to_string(preds.size()) + " predictions but " +
                    std::to_string(refs.size()) + " references");
  }
  std::vector<std::string> tags(preds.size(), "all");
  if (command.tags) {
    tags = read_lines(*command.tags);
    if (tags.size() != preds.size()) {
      throw DataError(std::to_string(tags.size()) + " tags for " + std::to_string(preds.size()) +
                      " predictions");
    }
  }
  std::vector<metrics::EvalPair> pairs;
  pairs.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    pairs.push_back({textpipe::normalize(preds[i], command.mode),
                     textpipe::normalize(refs[i], command.mode), tags[i]});
  }
  const auto report = metrics::evaluate_corpus(pairs, command.expected_tags);
  metrics::write_table(out, report);
  if (command.out_csv) {
    std::ostringstream csv;
    metrics::write_csv(csv, report);
    write_file(*command.out_csv, csv.str());
  }
}

void cmd_dedup(const DedupCommand& command, std::ostream& out) {
  std::ifstream in(command.input, std::ios::binary);
  if (!in) throw IoError("cannot read " + command.input.string());
  std::vector<textpipe::InstructionRecord> records;
  try {
    records = textpipe::read_records(in);
  } catch (const DataError& e) {
    throw DataError(command.input.string() + " " + e.what());
  }
  const auto result = textpipe::dedup(records, command.thresholds);
  if (result.accepted.size() + result.rejected.size() != records.size()) {
    throw InvariantError("dedup lost records: " + std::to_string(records.size()) + " in, " +
                         std::to_string(result.accepted.size()) + " accepted, " +
                         std::to_string(result.rejected.size()) + " rejected");
  }

  std::ostringstream accepted, rejected;
  textpipe::write_records(accepted, result.accepted);
  std::size_t by_simhash = 0;
  for (const auto& r : result.rejected) {
    rejected << textpipe::to_json(r).dump() << '\n';
    by_simhash += r.gate == "simhash";
  }
  fs::path rejected_path = command.rejected.value_or(
      command.output.parent_path() / (command.output.stem().string() + ".rejected.jsonl"));
  write_file(command.output, accepted.str());
  write_file(rejected_path, rejected.str());

  const nlohmann::json report = {
      {"thresholds",
       {{"rouge", command.thresholds.rouge}, {"hamming", command.thresholds.hamming}}},
      {"records", records.size()},
      {"accepted", result.accepted.size()},
      {"rejected", result.rejected.size()},
      {"rejected_by_gate",
       {{"simhash", by_simhash}, {"rouge_l", result.rejected.size() - by_simhash}}}};
  if (command.report) write_file(*command.report, report.dump(2) + "\n");
  out << "dedup thresholds: rouge_l > " << command.thresholds.rouge
      << ", hamming <= " << command.thresholds.hamming << '\n'
      << "records " << records.size() << ", accepted " << result.accepted.size() << ", rejected "
      << result.rejected.size() << " (simhash " << by_simhash << ", rouge_l "
      << result.rejected.size() - by_simhash << ")\n";
}

void cmd_route_stats(const RouteStatsCommand& command, std::ostream& out) {
  const RunConfig& cfg = command.config;
  const model::Model m = load_model(cfg, command.checkpoint);
  const auto entries = read_caption_file(command.corpus);
  if (entries.empty()) throw DataError("no sequences in " + command.corpus.string());

  const std::size_t layers = m.blocks.size();
  std::vector<std::vector<moe::RoutingDecision>> routing(layers);
  std::vector<moe::Modality> modality;
  for (const auto& e : entries) {
    Tape tape;
    const auto r = model::forward(
        tape, m,
        sequence_for(cfg.model, e, load_entry_image(e, command.corpus.parent_path(), cfg.model)));
    for (std::size_t l = 0; l < layers; ++l) routing[l].push_back(r.layers[l].routing);
    modality.insert(modality.end(), r.modality.begin(), r.modality.end());
  }

  std::vector<moe::DispatchStats> stats;
  for (std::size_t l = 0; l < layers; ++l) {
    stats.push_back(moe::dispatch_stats(moe::concat(routing[l]), modality));
    const auto& f = stats.back().dispatch;
    const double sum = std::accumulate(f.begin(), f.end(), 0.0);
    if (std::abs(sum - static_cast<double>(cfg.model.top_k)) > 1e-9) {
      throw InvariantError("layer " + std::to_string(l) + ": dispatch ratios sum to " +
                           std::to_string(sum) +
                           ", expected top_k = " + std::to_string(cfg.model.top_k));
    }
  }

  std::string csv = "layer,expert,F,G,F_image,F_text\n";
  char row[160];
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& s = stats[l];
    for (std::size_t e = 0; e < s.experts; ++e) {
      std::snprintf(row, sizeof row, "%zu,%zu,%.6f,%.6f,%.6f,%.6f\n", l, e, s.dispatch[e],
                    s.gate_mean[e], s.dispatch_image[e], s.dispatch_text[e]);
      csv += row;
    }
  }
  const fs::path path = command.out_csv.value_or(cfg.output_dir / "route_stats.csv");
  write_file(path, csv);
  out << "route-stats: " << entries.size() << " sequences, " << layers << " layers x "
      << cfg.model.experts << " experts -> " << path.string() << '\n';
}

}  // namespace echomoe::cli
