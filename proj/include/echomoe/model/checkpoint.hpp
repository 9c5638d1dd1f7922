// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>

#include <json.hpp>

#include "echomoe/numerics/parameters.hpp"

namespace echomoe::model {

std::string sha256_hex(std::span<const unsigned char> bytes);

/// Little-endian bytes of the selected parameters in store order, each
/// preceded by its name and shape so that renames and reshapes also change
/// the digest.
std::vector<unsigned char> serialize_parameters(
    const ParameterStore& store, const std::function<bool(const Parameter&)>& select);

std::string parameter_digest(const ParameterStore& store,
                             const std::function<bool(const Parameter&)>& select);

/// A checkpoint directory holds params.bin (raw little-endian 64-bit values
/// in store order) and manifest.json (names, shapes, frozen flags, offsets,
/// the SHA-256 of params.bin, the seed and an echo of the run config).
inline constexpr const char* kParamsFile = "params.bin";
inline constexpr const char* kManifestFile = "manifest.json";

void save_checkpoint(const std::filesystem::path& dir, const ParameterStore& store,
                     const nlohmann::json& config_echo, std::uint64_t seed);

nlohmann::json read_manifest(const std::filesystem::path& dir);

/// Copies every checkpoint parameter into the store after checking names and
/// shapes one for one. Store parameters absent from the checkpoint are only
/// allowed under the adapter namespace (a Stage I checkpoint loaded into a
/// model with fresh adapters). Frozen flags are restored. Mismatches raise
/// DataError; unreadable files raise IoError.
nlohmann::json load_checkpoint(const std::filesystem::path& dir, ParameterStore& store);

}  // namespace echomoe::model
