#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "faceparse/attrclass/attribute.hpp"
#include "faceparse/dataio/manifest.hpp"
#include "faceparse/dataio/synth.hpp"
#include "faceparse/faceseg/model.hpp"
#include "faceparse/importance/forest.hpp"

namespace faceparse::cli {

inline constexpr const char* kProfileFormat = "faceparse-profile";
inline constexpr int kProfileVersion = 1;

/// A named configuration bundle covering every pipeline stage.
struct Profile {
  std::string name;
  netkit::NetworkSpec seg_network;
  faceseg::SegTrainingConfig seg;
  /// 5-plane attribute network; its class count is replaced by the scheme's.
  netkit::NetworkSpec attr_network;
  netkit::TrainConfig attr_train;
  importance::ForestConfig forest;
  std::size_t k = 10;
  bool shared_seg_model = false;
  bool permutation_control = true;
  dataio::SynthConfig synth;
  std::optional<dataio::AttributeScheme> scheme;  // default for synth output

  /// Builds every network and checks stage compatibility; ConfigError names
  /// the offending field.
  void validate() const;

  /// attr_network with class_count and the final dense width set to k.
  netkit::NetworkSpec attribute_network(std::size_t k) const;
};

void to_json(nlohmann::json& j, const Profile& p);
void from_json(const nlohmann::json& j, Profile& p);

/// Full-size networks (249 input so the patch has a center pixel inside a
/// 250x250 image); 50 epochs at 1e-5, momentum 0.8, batch 250.
Profile paper_profile();
/// Small networks sized for desk-scale synthetic runs.
Profile toy_profile();

/// "paper", "toy", or a path to a profile JSON file.
Profile resolve_profile(const std::string& name_or_path);

}  // namespace faceparse::cli
