#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace faceparse::dataio {

enum class PngColor { gray, rgb, rgba, palette, gray_alpha };

/// Decoded 8-bit raster, rows top to bottom, channels interleaved. Palette
/// images keep their raw indices (one channel).
struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  PngColor color = PngColor::gray;
  std::vector<std::uint8_t> pixels;
};

/// Throws UnsupportedImageError for bit depths other than 8 and FormatError
/// for anything libpng rejects. `what` names the source in messages.
RawImage decode_png(std::span<const std::byte> bytes, const std::string& what);

/// Encodes gray (1) or RGB (3) 8-bit pixels. Output is a pure function of
/// the input: no timestamps, fixed compression settings.
std::vector<std::byte> encode_png(std::size_t width, std::size_t height, std::size_t channels,
                                  std::span<const std::uint8_t> pixels);

RawImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, std::size_t width, std::size_t height, std::size_t channels,
               std::span<const std::uint8_t> pixels);

}  // namespace faceparse::dataio
