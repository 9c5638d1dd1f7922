// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "echomoe/numerics/tensor.hpp"
#include "echomoe/textpipe/records.hpp"

namespace echomoe::cli {

// Raw image files: 16-byte header ("EMI1", then H, W, C as little-endian
// uint32) followed by H·W·C little-endian float32 values, row-major.
inline constexpr char kImageMagic[4] = {'E', 'M', 'I', '1'};

void write_image(const std::filesystem::path& path, const Tensor& image);
Tensor read_image(const std::filesystem::path& path);

/// Planted features of a caption image: one coloured block in a quadrant.
struct BlockFeatures {
  std::size_t size = 0;      // 0 small, 1 large
  std::size_t colour = 0;    // 0 red, 1 green, 2 blue
  std::size_t quadrant = 0;  // 0 top left, 1 top right, 2 bottom left, 3 bottom right
};

std::string caption_for(const BlockFeatures& f);
/// The quadrant phrase, used as the evaluation tag.
std::string size_name(std::size_t size);
std::string colour_name(std::size_t colour);
std::string quadrant_name(std::size_t quadrant);

struct CaptionSample {
  std::string id;
  BlockFeatures features;
  Tensor image;  // side × side × channels, values stored as float32 on disk
  std::string caption;
};

/// Images are side×side×channels with low-amplitude background noise and one
/// block whose size, colour and quadrant are drawn from the seed. `side`
/// must be a positive multiple of 4 and `channels` at least 3.
std::vector<CaptionSample> synth_captions(std::uint64_t seed, std::size_t count, std::size_t side,
                                          std::size_t channels);

struct PlantedDuplicate {
  std::string id;
  std::string source_id;
};

struct InstructionCorpus {
  std::vector<textpipe::InstructionRecord> records;
  std::vector<PlantedDuplicate> planted;
};

/// `count` instruction records of which round(duplicate_rate·count) are
/// near-duplicates of an earlier original (case, punctuation and one-word
/// edits). Originals are drawn from a large pseudo-word vocabulary so that
/// they are mutually dissimilar.
InstructionCorpus synth_instructions(std::uint64_t seed, std::size_t count, double duplicate_rate);

}  // namespace echomoe::cli
