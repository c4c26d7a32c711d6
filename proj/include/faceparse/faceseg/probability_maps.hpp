#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "faceparse/dataio/image.hpp"
#include "faceparse/faceseg/planes.hpp"
#include "faceparse/palette.hpp"
#include "faceparse/tensor/tensor.hpp"

namespace faceparse::faceseg {

using dataio::LabelMask;

/// Seven per-pixel class probability planes in palette order.
struct ProbabilityMaps {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;  // [class][y][x]
  std::string model_id;
  std::string image_id;

  ProbabilityMaps() = default;
  ProbabilityMaps(std::size_t width, std::size_t height);

  double at(std::size_t cls, std::size_t x, std::size_t y) const { return values[(cls * height + y) * width + x]; }
  double& at(std::size_t cls, std::size_t x, std::size_t y) { return values[(cls * height + y) * width + x]; }
  std::span<const double> plane(std::size_t cls) const;

  /// [7, H, W] copy.
  Tensor as_tensor() const;
  static ProbabilityMaps from_tensor(const Tensor& t);

  /// Largest |sum - 1| over pixels; NaN-safe (NaN reports as infinity).
  double max_sum_error() const;
  /// FormatError unless every value is >= 0 and every pixel sums to 1 within tol.
  void validate(double tol = 1e-9) const;

  PlaneStack to_planes() const;
  static ProbabilityMaps from_planes(const PlaneStack& s);

  /// Planes only; ids are provenance and do not take part.
  friend bool operator==(const ProbabilityMaps& a, const ProbabilityMaps& b) {
    return a.width == b.width && a.height == b.height && a.values == b.values;
  }
};

/// Per-pixel argmax, ties to the lowest class index.
LabelMask argmax_mask(const ProbabilityMaps& pms);

/// round(255 * p) per pixel.
std::vector<std::uint8_t> quantize_plane(std::span<const double> plane);

inline constexpr const char* kSidecarName = "pms.fppm";

/// Writes pm_<class>.png for every class plus the lossless sidecar. Returns
/// the written paths.
std::vector<std::filesystem::path> export_pms(const ProbabilityMaps& pms, const std::filesystem::path& dir);
ProbabilityMaps load_pms_sidecar(const std::filesystem::path& path);

}  // namespace faceparse::faceseg
