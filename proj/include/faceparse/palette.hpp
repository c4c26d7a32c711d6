#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

namespace faceparse {

inline constexpr std::size_t kClassCount = 7;

enum FaceClass : std::uint8_t { kBack = 0, kSkin = 1, kHair = 2, kEyes = 3, kBrows = 4, kNose = 5, kMouth = 6 };

struct PaletteEntry {
  std::uint8_t index;
  std::string_view name;
  std::array<std::uint8_t, 3> color;
};

/// Frozen class order used by masks, probability maps and reports.
inline constexpr std::array<PaletteEntry, kClassCount> kPalette = {{
    {0, "back", {0, 0, 0}},
    {1, "skin", {255, 204, 153}},
    {2, "hair", {102, 51, 0}},
    {3, "eyes", {0, 128, 255}},
    {4, "brows", {255, 255, 0}},
    {5, "nose", {255, 0, 255}},
    {6, "mouth", {255, 0, 0}},
}};

/// Planes that form the attribute feature vector, in stacking order.
inline constexpr std::array<std::size_t, 5> kFeatureClasses = {kHair, kEyes, kBrows, kNose, kMouth};

}  // namespace faceparse
