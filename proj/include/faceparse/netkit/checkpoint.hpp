#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "faceparse/netkit/network.hpp"
#include "faceparse/netkit/train.hpp"

namespace faceparse::netkit {

/// Binary checkpoint, little-endian:
///
///   "FPKT"  u32 version  u64 blob_len  blob[blob_len]
///   repeated per parameter block:
///     u32 name_len  name  u64 count  f32[count]  u64 checksum
///
/// The blob is canonical JSON {"network": ..., "meta": ...}. Blocks run to
/// end of file; their number and shapes follow from the network. The block
/// checksum is FNV-1a 64 over the block's name_len, name, count and payload
/// bytes.
inline constexpr char kCheckpointMagic[4] = {'F', 'P', 'K', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string role;  // "segmentation", "attribute", ...
  TrainConfig config;
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  nlohmann::json extra = nlohmann::json::object();

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
  NetworkSpec spec;
  ParamSet params;
  CheckpointMeta meta;
};

std::vector<std::byte> encode_checkpoint(const NetworkSpec& spec, const ParamSet& params,
                                         const CheckpointMeta& meta);

/// Throws FormatError (bad magic), VersionError, TruncatedError,
/// ChecksumError or CompatibilityError (blocks disagree with the network).
Checkpoint decode_checkpoint(std::span<const std::byte> bytes, const std::string& what = "checkpoint");

/// Atomic write (temp file + rename).
void save_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec, const ParamSet& params,
                     const CheckpointMeta& meta);

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rounds every parameter to f32, the stored precision, so an in-memory model
/// and its reloaded checkpoint compute identical outputs.
void round_to_checkpoint_precision(ParamSet& params);

/// Also requires the stored network to equal `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const NetworkSpec& expected);

}  // namespace faceparse::netkit
