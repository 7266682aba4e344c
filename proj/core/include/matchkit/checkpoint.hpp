// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "matchkit/optimizer.hpp"
#include "matchkit/params.hpp"

namespace matchkit {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume training bit-exactly.
struct Checkpoint {
  std::string config_text;
  std::uint64_t config_hash = 0;
  std::uint64_t episode = 0;
  std::string rng_state;  // textual std::mt19937_64 state
  ModelParams params;
  AdamState optimizer;

  bool identical(const Checkpoint& other) const;
};

/// 64-bit FNV-1a of the canonical configuration text.
std::uint64_t config_hash(std::string_view text);

/// Layout (all integers little-endian):
///   "MNCKPT1\0" u32 version u64 config_hash u64 episode u64 adam_step
///   u32 len + config text, u32 len + rng state,
///   u32 count, then per tensor: u32 name_len, name, u32 rank, u64 dims[rank], f64 values
///   u32 CRC32 of all preceding bytes.
/// Tensor names are prefixed "param/", "bn_mean/", "bn_var/", "adam_m/", "adam_v/".
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Throws ConfigMismatchError when the stored hash differs from `expected_hash`.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t expected_hash);

/// Atomic write helper shared with the metrics log and CLI outputs.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace matchkit
