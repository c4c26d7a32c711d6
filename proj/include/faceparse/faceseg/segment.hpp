#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "faceparse/dataio/image.hpp"
#include "faceparse/faceseg/probability_maps.hpp"
#include "faceparse/netkit/network.hpp"
#include "faceparse/netkit/train.hpp"

namespace faceparse::faceseg {

/// How patches are cut around each pixel. Only reflection padding is
/// supported at the border.
struct PatchPlan {
  std::size_t patch = 33;   // odd, so a center pixel exists
  std::size_t stride = 1;   // training centers lie on multiples of stride
  std::string border = "reflect";

  std::size_t radius() const { return patch / 2; }
  void validate() const;

  friend bool operator==(const PatchPlan&, const PatchPlan&) = default;
};

void to_json(nlohmann::json& j, const PatchPlan& p);
void from_json(const nlohmann::json& j, PatchPlan& p);

/// Mirror index into [0, n) without repeating the edge sample.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n);

/// Pads every side by r using reflect_index.
Tensor reflect_pad(const Tensor& image, std::size_t r);

/// The patch x plan.patch window centered at pixel (x, y).
Tensor extract_patch(const Tensor& image, std::size_t x, std::size_t y, const PatchPlan& plan);

struct SamplingReport {
  std::array<std::size_t, kClassCount> available{};
  std::array<std::size_t, kClassCount> drawn{};
  std::vector<std::size_t> absent;  // classes with no eligible pixel
};

struct PatchSet {
  std::vector<netkit::Sample> samples;
  std::vector<std::pair<std::size_t, std::size_t>> centers;  // (x, y)
  SamplingReport report;
};

/// Up to `quota` patches per class, centers drawn without replacement from
/// that class's pixels by a stream derived from (seed, class). Classes are
/// emitted in palette order.
PatchSet sample_training_patches(const Tensor& image, const dataio::LabelMask& mask, const PatchPlan& plan,
                                 std::uint64_t seed, std::size_t quota);

enum class InferenceMode { automatic, naive, fast };

/// True when every conv/pool layer is unpadded, so dense sliding-window
/// inference can reuse feature maps across neighboring patches.
bool supports_fast_path(const netkit::Network& net);

/// Softmax of the patch centered at each pixel. Fast and naive modes give
/// bitwise-identical output; automatic uses fast when supported.
ProbabilityMaps segment(const netkit::Network& net, const netkit::ParamSet& params, const Tensor& image,
                        const PatchPlan& plan, InferenceMode mode = InferenceMode::automatic);

}  // namespace faceparse::faceseg
