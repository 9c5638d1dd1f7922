// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/cli/synth.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "echomoe/errors.hpp"
#include "echomoe/numerics/rng.hpp"

namespace echomoe::cli {
namespace {

static_assert(std::endian::native == std::endian::little, "image files are little-endian");

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.write(b, 4);
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

const char* const kSizes[] = {"small", "large"};
const char* const kColours[] = {"red", "green", "blue"};
const char* const kQuadrants[] = {"top left", "top right", "bottom left", "bottom right"};

std::string pseudo_word(SplitMix64& rng) {
  static const char* const syll[] = {"ka", "lo", "mi", "nu", "pe", "ra", "si", "to", "vu", "ze",
                                     "bri", "cha", "dro", "fen", "gal", "hur", "jin", "kor",
                                     "lum", "mar", "nol", "pix", "qua", "sto", "tri", "vel"};
  std::string w;
  for (std::size_t i = 0, n = 2 + rng.below(2); i < n; ++i) w += syll[rng.below(std::size(syll))];
  return w;
}

std::string sentence(SplitMix64& rng, std::size_t words, bool question) {
  std::string s;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) s += ' ';
    s += pseudo_word(rng);
  }
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s + (question ? "?" : ".");
}

// A near-duplicate that normalises to almost the same tokens: change case,
// punctuation and at most one word of the question.
textpipe::InstructionRecord near_duplicate(const textpipe::InstructionRecord& src,
                                           const std::string& id, SplitMix64& rng) {
  textpipe::InstructionRecord r = src;
  r.id = id;
  r.source = "planted:" + src.id;
  switch (rng.below(3)) {
    case 0:
      std::transform(r.question.begin(), r.question.end(), r.question.begin(),
                     [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
      break;
    case 1:
      r.answer += " !!";
      r.question = "  " + r.question;
      break;
    default: {
      const auto pos = r.question.find(' ');
      if (pos != std::string::npos) {
        const auto end = r.question.find(' ', pos + 1);
        r.question.replace(pos + 1, end == std::string::npos ? std::string::npos : end - pos - 1,
                           pseudo_word(rng));
      }
      break;
    }
  }
  return r;
}

}  // namespace

void write_image(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3) throw DimensionError("write_image: expected H×W×C tensor");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kImageMagic, 4);
  for (std::size_t a = 0; a < 3; ++a) put_u32(out, static_cast<std::uint32_t>(image.dim(a)));
  for (double v : image.data()) {
    const float f = static_cast<float>(v);
    char b[4];
    std::memcpy(b, &f, 4);
    out.write(b, 4);
  }
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

Tensor read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  char header[16];
  if (!in.read(header, 16) || std::memcmp(header, kImageMagic, 4) != 0) {
    throw DataError("image " + path.string() + " lacks the EMI1 header");
  }
  const std::size_t h = get_u32(header + 4), w = get_u32(header + 8), c = get_u32(header + 12);
  Tensor img({h, w, c});
  std::vector<float> raw(img.size());
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4))) {
    throw DataError("image " + path.string() + " is truncated");
  }
  for (std::size_t i = 0; i < raw.size(); ++i) img[i] = raw[i];
  return img;
}

std::string caption_for(const BlockFeatures& f) {
  return std::string("a ") + kSizes[f.size] + " " + kColours[f.colour] + " block in the " +
         kQuadrants[f.quadrant];
}

std::string size_name(std::size_t size) { return kSizes[size]; }

std::string colour_name(std::size_t colour) { return kColours[colour]; }

std::string quadrant_name(std::size_t quadrant) { return kQuadrants[quadrant]; }

std::vector<CaptionSample> synth_captions(std::uint64_t seed, std::size_t count, std::size_t side,
                                          std::size_t channels) {
  if (side == 0 || side % 4 != 0) {
    throw ConfigError("synthetic image side " + std::to_string(side) + " must be a multiple of 4");
  }
  if (channels < 3) throw ConfigError("synthetic images need at least 3 channels");
  SplitMix64 rng = SplitMix64(seed).fork("captions");
  std::vector<CaptionSample> out;
  const std::size_t half = side / 2;
  for (std::size_t n = 0; n < count; ++n) {
    CaptionSample s;
    char id[32];
    std::snprintf(id, sizeof id, "cap%05zu", n);
    s.id = id;
    s.features = {rng.below(2), rng.below(3), rng.below(4)};
    s.image = Tensor({side, side, channels});
    for (double& v : s.image.data()) v = 0.1 * rng.uniform();
    // Block edge: a quarter or most of the quadrant, with a jittered offset.
    const std::size_t edge = s.features.size == 0 ? std::max<std::size_t>(1, side / 4)
                                                    : std::max<std::size_t>(1, half - half / 4);
    const std::size_t slack = half - edge;
    const std::size_t top = (s.features.quadrant / 2) * half + rng.below(slack + 1);
    const std::size_t left = (s.features.quadrant % 2) * half + rng.below(slack + 1);
    for (std::size_t y = top; y < top + edge; ++y)
      for (std::size_t x = left; x < left + edge; ++x)
        s.image[(y * side + x) * channels + s.features.colour] = 1.0;
    s.caption = caption_for(s.features);
    out.push_back(std::move(s));
  }
  return out;
}

InstructionCorpus synth_instructions(std::uint64_t seed, std::size_t count, double duplicate_rate) {
  if (!(duplicate_rate >= 0.0 && duplicate_rate < 1.0)) {
    throw ConfigError("duplicate rate must lie in [0, 1)");
  }
  SplitMix64 rng = SplitMix64(seed).fork("instructions");
  const auto planted =
      static_cast<std::size_t>(std::llround(duplicate_rate * static_cast<double>(count)));
  if (planted > 0 && planted >= count) throw ConfigError("duplicate rate leaves no originals");

  // Choose which stream positions hold duplicates; position 0 is always an
  // original so every duplicate has an earlier source.
  std::vector<std::size_t> slots(count > 0 ? count - 1 : 0);
  std::iota(slots.begin(), slots.end(), std::size_t{1});
  for (std::size_t i = 0; i < planted; ++i) std::swap(slots[i], slots[i + rng.below(slots.size() - i)]);
  std::vector<bool> is_dup(count, false);
  for (std::size_t i = 0; i < planted; ++i) is_dup[slots[i]] = true;

  static const char* const modalities[] = {"thyroid", "breast", "liver", "kidney", "carotid"};
  InstructionCorpus corpus;
  std::vector<std::size_t> originals;
  for (std::size_t n = 0; n < count; ++n) {
    char id[32];
    std::snprintf(id, sizeof id, "ins%05zu", n);
    if (is_dup[n]) {
      const auto& src = corpus.records[originals[rng.below(originals.size())]];
      corpus.planted.push_back({id, src.id});
      corpus.records.push_back(near_duplicate(src, id, rng));
      continue;
    }
    textpipe::InstructionRecord r;
    r.id = id;
    r.template_class = rng.below(2) == 0 ? textpipe::TemplateClass::Open
                                         : textpipe::TemplateClass::Closed;
    r.modality = modalities[rng.below(std::size(modalities))];
    r.question = sentence(rng, 8 + rng.below(6), true);
    r.answer = r.template_class == textpipe::TemplateClass::Closed
                   ? (rng.below(2) ? "Yes. " : "No. ") + sentence(rng, 6 + rng.below(5), false)
                   : sentence(rng, 12 + rng.below(8), false);
    r.source = "synthetic";
    originals.push_back(corpus.records.size());
    corpus.records.push_back(std::move(r));
  }
  return corpus;
}

}  // namespace echomoe::cli
