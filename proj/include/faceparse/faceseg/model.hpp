#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>

#include "json.hpp"

#include "faceparse/faceseg/segment.hpp"
#include "faceparse/netkit/checkpoint.hpp"

namespace faceparse::faceseg {

/// Everything besides the network that shapes a segmentation model.
struct SegTrainingConfig {
  PatchPlan plan;
  std::size_t quota = 16;  // patches per class per image
  bool normalize_illumination = false;
  netkit::TrainConfig train;

  void validate() const;
  friend bool operator==(const SegTrainingConfig&, const SegTrainingConfig&) = default;
};

void to_json(nlohmann::json& j, const SegTrainingConfig& c);
void from_json(const nlohmann::json& j, SegTrainingConfig& c);

struct SegModel {
  netkit::NetworkSpec spec;
  netkit::ParamSet params;
  SegTrainingConfig config;

  /// Hex digest of the encoded checkpoint; stamped into produced PMs.
  std::string id() const;
};

struct LabeledImage {
  const Tensor* image;
  const dataio::LabelMask* mask;
  std::string id;
};

struct SegTraining {
  SegModel model;
  netkit::TrainHistory history;
  std::size_t patch_count = 0;
};

/// Samples class-balanced patches from every image (image i uses the stream
/// derived from (train.seed, i)) and trains the network on them.
SegTraining train_segmentation_model(std::span<const LabeledImage> data, const netkit::NetworkSpec& spec,
                                     const SegTrainingConfig& config, const netkit::TrainCallbacks& callbacks = {});

/// Applies the model's preprocessing, then dense inference.
ProbabilityMaps segment_image(const SegModel& model, const Tensor& image, const std::string& image_id = {});

/// Checkpoint role "segmentation" with the training config in meta.extra.
std::vector<std::byte> encode_segmentation_model(const SegModel& model);
void save_segmentation_model(const std::filesystem::path& path, const SegModel& model);
SegModel load_segmentation_model(const std::filesystem::path& path);

}  // namespace faceparse::faceseg
