#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "faceparse/tensor/tensor.hpp"

namespace faceparse::dataio {

/// Per-pixel class indices, row-major. Every value lies in [0, kClassCount).
class LabelMask {
 public:
  LabelMask() = default;
  LabelMask(std::size_t width, std::size_t height, std::uint8_t fill = 0);
  /// Throws MaskValueError naming the first out-of-range pixel.
  LabelMask(std::size_t width, std::size_t height, std::vector<std::uint8_t> labels);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  std::uint8_t at(std::size_t x, std::size_t y) const { return labels_[y * width_ + x]; }
  void set(std::size_t x, std::size_t y, std::uint8_t label);
  std::span<const std::uint8_t> labels() const { return labels_; }

  /// Pixel count per class.
  std::vector<std::size_t> histogram() const;

  friend bool operator==(const LabelMask&, const LabelMask&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> labels_;
};

/// RGB PNG to a [3,H,W] tensor with values in [0,1]. Non-RGB color types
/// raise UnsupportedImageError.
Tensor load_image(const std::filesystem::path& path);
Tensor decode_image(std::span<const std::byte> png, const std::string& what);
/// Quantizes round(255 * clamp(v, 0, 1)). Accepts 1- or 3-channel tensors.
std::vector<std::byte> encode_image(const Tensor& image);
void save_image(const std::filesystem::path& path, const Tensor& image);

/// Gray or palette-indexed 8-bit PNG; values above 6 raise MaskValueError.
LabelMask load_mask(const std::filesystem::path& path);
LabelMask decode_mask(std::span<const std::byte> png, const std::string& what);
/// Single-channel 8-bit PNG holding the class indices.
std::vector<std::byte> encode_mask(const LabelMask& mask);
void save_mask(const std::filesystem::path& path, const LabelMask& mask);

/// Image and mask as a training pair; DimensionMismatchError if the sizes differ.
void require_paired(const Tensor& image, const LabelMask& mask, const std::string& what);

/// Bilinear resampling with pixel-center alignment. Same size returns a copy.
Tensor resize(const Tensor& image, std::size_t height, std::size_t width);
/// Nearest-neighbor resampling, so no new class values appear.
LabelMask resize(const LabelMask& mask, std::size_t height, std::size_t width);

/// BT.601 luma values in [0,1] for a [3,H,W] image.
std::vector<double> luminance(const Tensor& image);

/// Histogram-equalizes luma over 256 bins and adds each pixel's original
/// chroma offsets (R-Y, G-Y, B-Y) back, clipping to [0,1]. A single-level
/// luma histogram leaves the image unchanged.
Tensor normalize_illumination(const Tensor& image);

}  // namespace faceparse::dataio
