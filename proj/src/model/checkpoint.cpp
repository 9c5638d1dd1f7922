// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/model/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <set>
#include <sstream>

#include "echomoe/errors.hpp"
#include "echomoe/lora/lora.hpp"

namespace echomoe::model {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

void append_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void append_values(std::vector<unsigned char>& out, std::span<const double> values) {
  const std::size_t at = out.size();
  out.resize(at + values.size() * sizeof(double));
  if (!values.empty()) std::memcpy(out.data() + at, values.data(), values.size() * sizeof(double));
}

std::string errno_text() { return std::strerror(errno); }

}  // namespace

std::string sha256_hex(std::span<const unsigned char> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::vector<unsigned char> serialize_parameters(
    const ParameterStore& store, const std::function<bool(const Parameter&)>& select) {
  std::vector<unsigned char> out;
  for (const Parameter& p : store) {
    if (!select(p)) continue;
    append_u64(out, p.name.size());
    out.insert(out.end(), p.name.begin(), p.name.end());
    append_u64(out, p.value.rank());
    for (std::size_t d : p.value.shape()) append_u64(out, d);
    append_values(out, p.value.data());
  }
  return out;
}

std::string parameter_digest(const ParameterStore& store,
                             const std::function<bool(const Parameter&)>& select) {
  return sha256_hex(serialize_parameters(store, select));
}

void save_checkpoint(const std::filesystem::path& dir, const ParameterStore& store,
                     const nlohmann::json& config_echo, std::uint64_t seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

  std::vector<unsigned char> bytes;
  nlohmann::json params = nlohmann::json::array();
  for (const Parameter& p : store) {
    params.push_back({{"name", p.name},
                      {"shape", p.value.shape()},
                      {"frozen", p.frozen},
                      {"offset", bytes.size() / sizeof(double)},
                      {"count", p.value.size()}});
    append_values(bytes, p.value.data());
  }
  nlohmann::json manifest = {{"format", "echo-moe-checkpoint"},
                             {"version", 1},
                             {"seed", seed},
                             {"config", config_echo},
                             {"params_sha256", sha256_hex(bytes)},
                             {"params", params}};

  const auto bin_path = dir / kParamsFile;
  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw IoError("cannot open " + bin_path.string() + " for writing: " + errno_text());
  bin.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!bin.flush()) throw IoError("write failed for " + bin_path.string() + ": " + errno_text());

  const auto manifest_path = dir / kManifestFile;
  std::ofstream js(manifest_path, std::ios::trunc);
  if (!js) throw IoError("cannot open " + manifest_path.string() + " for writing: " + errno_text());
  js << manifest.dump(2) << '\n';
  if (!js.flush()) throw IoError("write failed for " + manifest_path.string() + ": " + errno_text());
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestFile;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint manifest " + path.string() + ": " + errno_text());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint manifest " + path.string() + ": " + e.what());
  }
}

nlohmann::json load_checkpoint(const std::filesystem::path& dir, ParameterStore& store) {
  nlohmann::json manifest = read_manifest(dir);
  const auto bin_path = dir / kParamsFile;
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + bin_path.string() + ": " + errno_text());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (sha256_hex(bytes) != manifest.value("params_sha256", "")) {
    throw DataError("checkpoint " + bin_path.string() + " does not match its manifest digest");
  }
  if (bytes.size() % sizeof(double) != 0) {
    throw DataError("checkpoint " + bin_path.string() + " has a truncated value");
  }
  const std::size_t total = bytes.size() / sizeof(double);

  std::set<std::string> seen;
  try {
    for (const auto& entry : manifest.at("params")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto count = entry.at("count").get<std::size_t>();
      auto id = store.find(name);
      if (!id) throw DataError("checkpoint parameter " + name + " does not exist in the model");
      Parameter& p = store.at(*id);
      if (p.value.shape() != shape) {
        throw DataError("checkpoint parameter " + name + " has shape " + to_string(shape) +
                        " but the model expects " + to_string(p.value.shape()));
      }
      if (count != p.value.size() || offset + count > total) {
        throw DataError("checkpoint parameter " + name + " points outside params.bin");
      }
      std::memcpy(p.value.data().data(), bytes.data() + offset * sizeof(double),
                  count * sizeof(double));
      p.frozen = entry.at("frozen").get<bool>();
      seen.insert(name);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  for (const Parameter& p : store) {
    if (!seen.contains(p.name) && !p.name.starts_with(lora::kPrefix)) {
      throw DataError("checkpoint in " + dir.string() + " lacks parameter " + p.name);
    }
  }
  return manifest;
}

}  // namespace echomoe::model
