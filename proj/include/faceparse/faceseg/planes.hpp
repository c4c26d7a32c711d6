#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace faceparse::faceseg {

/// Lossless plane file, little-endian:
///
///   "FPPM"  u32 version  u32 width  u32 height
///   planes x height x width f64 (plane-major, then rows)
///   u64 FNV-1a 64 over every preceding byte
///
/// The plane count follows from the file length.
inline constexpr char kPlaneMagic[4] = {'F', 'P', 'P', 'M'};
inline constexpr std::uint32_t kPlaneVersion = 1;

struct PlaneStack {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t planes = 0;
  std::vector<double> values;

  friend bool operator==(const PlaneStack&, const PlaneStack&) = default;
};

std::vector<std::byte> encode_planes(const PlaneStack& stack);

/// FormatError / VersionError / TruncatedError / ChecksumError on damage;
/// CompatibilityError if `expected_planes` is given and differs.
PlaneStack decode_planes(std::span<const std::byte> bytes, const std::string& what,
                         std::optional<std::size_t> expected_planes = std::nullopt);

void save_planes(const std::filesystem::path& path, const PlaneStack& stack);
PlaneStack load_planes(const std::filesystem::path& path, std::optional<std::size_t> expected_planes = std::nullopt);

}  // namespace faceparse::faceseg
