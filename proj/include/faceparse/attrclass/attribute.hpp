#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "faceparse/dataio/manifest.hpp"
#include "faceparse/faceseg/probability_maps.hpp"
#include "faceparse/netkit/checkpoint.hpp"
#include "faceparse/netkit/network.hpp"
#include "faceparse/netkit/train.hpp"

namespace faceparse::attrclass {

using dataio::AttributeScheme;

inline constexpr std::size_t kFeaturePlanes = 5;

/// Hair, eyes, brows, nose and mouth planes stacked as a [5,H,W] tensor.
struct FeatureVector {
  Tensor planes;
  std::string image_id;
};

/// Selects planes 2..6 in palette order and resamples each bilinearly to
/// target_h x target_w (no resampling when the size already matches).
FeatureVector build_feature_vector(const faceseg::ProbabilityMaps& pms, std::size_t target_h, std::size_t target_w);

void save_feature_vector(const std::filesystem::path& path, const FeatureVector& f);
FeatureVector load_feature_vector(const std::filesystem::path& path);

struct AttributeModel {
  netkit::NetworkSpec spec;
  netkit::ParamSet params;
  AttributeScheme scheme;
  netkit::TrainConfig config;

  /// ConfigError unless the network takes 5 channels and predicts one class
  /// per scheme label.
  void validate() const;
};

struct LabeledFeature {
  const FeatureVector* feature;
  std::size_t label;
};

struct AttributeTraining {
  AttributeModel model;
  netkit::TrainHistory history;
};

/// Trains `spec` (5-channel input, class_count = scheme size) on the
/// features. Every label needs at least two examples.
AttributeTraining train_attribute_model(std::span<const LabeledFeature> data, const AttributeScheme& scheme,
                                        const netkit::NetworkSpec& spec, const netkit::TrainConfig& config,
                                        const netkit::TrainCallbacks& callbacks = {});

struct Classification {
  std::size_t label = 0;
  std::vector<double> probabilities;
};

/// Argmax of the softmax output, ties to the lowest index.
Classification classify(const AttributeModel& model, const FeatureVector& f);

void save_attribute_model(const std::filesystem::path& path, const AttributeModel& model);
AttributeModel load_attribute_model(const std::filesystem::path& path);

}  // namespace faceparse::attrclass
