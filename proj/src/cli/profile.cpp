#include "faceparse/cli/profile.hpp"

#include "faceparse/error.hpp"
#include "faceparse/fileio.hpp"

namespace faceparse::cli {

using nlohmann::json;

void Profile::validate() const {
  try {
    seg.validate();
    const netkit::Network seg_net(seg_network);
    if (seg_network.class_count != kClassCount) throw ConfigError("segmentation network must predict 7 classes");
    if (seg_network.input_shape != Shape{3, seg.plan.patch, seg.plan.patch}) {
      throw ConfigError("segmentation network input " + to_string(seg_network.input_shape) + " must be 3x" +
                        std::to_string(seg.plan.patch) + "x" + std::to_string(seg.plan.patch) + " to match the patch");
    }
    const netkit::Network attr_net(attribute_network(2));
    if (attr_network.input_shape.size() != 3 || attr_network.input_shape[0] != attrclass::kFeaturePlanes) {
      throw ConfigError("attribute network must take 5 input planes");
    }
    attr_train.validate();
    forest.validate();
    if (k < 2) throw ConfigError("k must be >= 2");
    synth.validate();
    if (scheme) scheme->validate();
  } catch (const ConfigError& e) {
    throw ConfigError("profile '" + name + "': " + e.what());
  } catch (const ShapeError& e) {
    throw ConfigError("profile '" + name + "': " + e.what());
  }
}

netkit::NetworkSpec Profile::attribute_network(std::size_t k) const {
  netkit::NetworkSpec s = attr_network;
  s.class_count = k;
  for (auto it = s.layers.rbegin(); it != s.layers.rend(); ++it) {
    if (it->kind == netkit::LayerKind::dense) {
      it->units = k;
      break;
    }
  }
  return s;
}

void to_json(json& j, const Profile& p) {
  j = json{{"format", kProfileFormat},
           {"version", kProfileVersion},
           {"name", p.name},
           {"segmentation", {{"network", p.seg_network}, {"training", p.seg}}},
           {"attribute", {{"network", p.attr_network}, {"train", p.attr_train}}},
           {"forest", p.forest},
           {"kfold", {{"k", p.k}, {"shared_segmentation_model", p.shared_seg_model}, {"permutation_control", p.permutation_control}}},
           {"synth", p.synth},
           {"scheme", p.scheme ? json(*p.scheme) : json(nullptr)}};
}

void from_json(const json& j, Profile& p) {
  if (j.value("format", std::string{}) != kProfileFormat) throw ConfigError("not a faceparse profile");
  if (j.value("version", 0) != kProfileVersion) {
    throw ConfigError("unsupported profile version " + j.value("version", json(nullptr)).dump());
  }
  p.name = j.at("name").get<std::string>();
  p.seg_network = j.at("segmentation").at("network").get<netkit::NetworkSpec>();
  p.seg = j.at("segmentation").at("training").get<faceseg::SegTrainingConfig>();
  p.attr_network = j.at("attribute").at("network").get<netkit::NetworkSpec>();
  p.attr_train = j.at("attribute").at("train").get<netkit::TrainConfig>();
  p.forest = j.value("forest", importance::ForestConfig{});
  const json kf = j.value("kfold", json::object());
  p.k = kf.value("k", std::size_t{10});
  p.shared_seg_model = kf.value("shared_segmentation_model", false);
  p.permutation_control = kf.value("permutation_control", true);
  p.synth = j.contains("synth") ? j.at("synth").get<dataio::SynthConfig>() : dataio::default_synth_config();
  if (j.contains("scheme") && !j.at("scheme").is_null()) p.scheme = j.at("scheme").get<dataio::AttributeScheme>();
}

Profile paper_profile() {
  Profile p;
  p.name = "paper";
  p.seg.plan.patch = 249;
  p.seg_network = netkit::paper_network(3, kClassCount, 249);
  p.seg.quota = 32;
  p.seg.normalize_illumination = true;
  p.seg.train = netkit::paper_train_config();
  p.attr_network = netkit::paper_network(attrclass::kFeaturePlanes, 2, 250);
  p.attr_train = netkit::paper_train_config();
  p.synth = dataio::default_synth_config();
  return p;
}

Profile toy_profile() {
  Profile p;
  p.name = "toy";
  p.seg_network = netkit::toy_segmentation_network();
  p.seg.plan.patch = 33;
  p.seg.quota = 32;
  p.seg.train = {3, 0.01, 0.8, 16, 0};
  p.attr_network = netkit::toy_attribute_network(attrclass::kFeaturePlanes, 2);
  p.attr_train = {50, 0.01, 0.8, 8, 0};
  p.synth = dataio::default_synth_config();
  return p;
}

Profile resolve_profile(const std::string& name_or_path) {
  Profile p;
  if (name_or_path == "paper") {
    p = paper_profile();
  } else if (name_or_path == "toy") {
    p = toy_profile();
  } else {
    const std::filesystem::path path(name_or_path);
    if (!std::filesystem::exists(path)) {
      throw ConfigError("unknown profile '" + name_or_path + "' (expected paper, toy or a profile file)");
    }
    try {
      p = json::parse(read_file_text(path)).get<Profile>();
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ": invalid profile: " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  p.validate();
  return p;
}

}  // namespace faceparse::cli
