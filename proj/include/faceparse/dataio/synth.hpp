#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "faceparse/dataio/image.hpp"
#include "faceparse/dataio/manifest.hpp"
#include "faceparse/tensor/tensor.hpp"

namespace faceparse::dataio {

/// Semi-axes (in pixels) of the minor-class shapes that define one style.
struct StyleFamily {
  std::string name;
  double eye_rx = 3.0, eye_ry = 2.0;
  double mouth_rx = 3.5, mouth_ry = 1.3;
  double brow_w = 7.0, brow_h = 1.6;
  double nose_rx = 1.6, nose_ry = 3.0;

  friend bool operator==(const StyleFamily&, const StyleFamily&) = default;
};

/// Procedural face layout: background, face ellipse, hair cap above a hair
/// line, two eyes with brows, nose and mouth. Everything except the style
/// family's shapes is drawn from ranges shared by all families.
struct SynthConfig {
  std::size_t size = 40;
  double face_rx = 14.0, face_ry = 17.0;
  double face_jitter = 0.8;    // +- on both face semi-axes
  double center_jitter = 1.5;  // +- on the face center
  double shape_jitter = 0.1;   // relative +- on minor-class axes
  double hair_line = 0.55;     // hair covers y < cy - hair_line * ry
  double eye_spacing = 6.0, eye_drop = 2.5, brow_gap = 2.0;
  double nose_drop = 2.5, mouth_drop = 8.5;
  double brightness_lo = 0.85, brightness_hi = 1.15;
  double noise = 0.03;
  std::vector<StyleFamily> families;

  /// ConfigError on sizes or ranges that cannot produce every class.
  void validate() const;

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

/// Two families trading eye area against mouth area so that the skin and
/// background areas stay matched.
SynthConfig default_synth_config();

void to_json(nlohmann::json& j, const StyleFamily& f);
void from_json(const nlohmann::json& j, StyleFamily& f);
void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct SynthSample {
  std::string id;
  Tensor image;  // [3, size, size]
  LabelMask mask;
  std::size_t label = 0;  // family index
};

/// Sample i uses family i mod F. Face geometry, colors and brightness come
/// from a stream keyed by (seed, i / F), so each run of F consecutive samples
/// differs only in family shapes and pixel noise. The first m samples do not
/// depend on n. Throws ConfigError if a
/// drawn mask misses any class.
SynthSample generate_sample(const SynthConfig& config, std::uint64_t seed, std::size_t index);
std::vector<SynthSample> generate_synthetic(const SynthConfig& config, std::uint64_t seed, std::size_t n);

/// Writes images/<id>.png, masks/<id>.png and manifest.json under `dir`.
DatasetManifest write_synthetic(const std::filesystem::path& dir, const SynthConfig& config, std::uint64_t seed,
                                std::size_t n);

}  // namespace faceparse::dataio
