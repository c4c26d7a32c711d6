#include "faceparse/attrclass/attribute.hpp"

#include <map>

#include "faceparse/error.hpp"
#include "faceparse/faceseg/planes.hpp"
#include "faceparse/palette.hpp"

namespace faceparse::attrclass {

FeatureVector build_feature_vector(const faceseg::ProbabilityMaps& pms, std::size_t target_h, std::size_t target_w) {
  if (target_h == 0 || target_w == 0) {
    throw ConfigError("build_feature_vector: target size " + std::to_string(target_h) + "x" +
                      std::to_string(target_w) + " is degenerate");
  }
  const std::size_t n = pms.width * pms.height;
  Tensor stacked({kFeaturePlanes, pms.height, pms.width});
  for (std::size_t k = 0; k < kFeaturePlanes; ++k) {
    const auto plane = pms.plane(kFeatureClasses[k]);
    std::copy(plane.begin(), plane.end(), stacked.data().begin() + static_cast<std::ptrdiff_t>(k * n));
  }
  return FeatureVector{dataio::resize(stacked, target_h, target_w), pms.image_id};
}

void save_feature_vector(const std::filesystem::path& path, const FeatureVector& f) {
  faceseg::save_planes(path, {f.planes.extent(2), f.planes.extent(1), kFeaturePlanes, f.planes.storage()});
}

FeatureVector load_feature_vector(const std::filesystem::path& path) {
  const auto s = faceseg::load_planes(path, kFeaturePlanes);
  return FeatureVector{Tensor({s.planes, s.height, s.width}, s.values), path.stem().string()};
}

void AttributeModel::validate() const {
  scheme.validate();
  if (spec.input_shape.size() != 3 || spec.input_shape[0] != kFeaturePlanes) {
    throw ConfigError("attribute model: network input " + to_string(spec.input_shape) + " must have 5 channels");
  }
  if (spec.class_count != scheme.class_count()) {
    throw ConfigError("attribute model: network predicts " + std::to_string(spec.class_count) +
                      " classes but scheme '" + scheme.name + "' has " + std::to_string(scheme.class_count()) +
                      " labels");
  }
}

AttributeTraining train_attribute_model(std::span<const LabeledFeature> data, const AttributeScheme& scheme,
                                        const netkit::NetworkSpec& spec, const netkit::TrainConfig& config,
                                        const netkit::TrainCallbacks& callbacks) {
  AttributeModel model{netkit::resolve_padding(spec), {}, scheme, config};
  model.validate();
  std::vector<std::size_t> counts(scheme.class_count(), 0);
  for (const auto& d : data) {
    if (d.label >= counts.size()) {
      throw DataError("train_attribute_model: label index " + std::to_string(d.label) + " is outside scheme '" +
                      scheme.name + "'");
    }
    ++counts[d.label];
  }
  for (std::size_t l = 0; l < counts.size(); ++l) {
    if (counts[l] < 2) {
      throw DataError("train_attribute_model: label '" + scheme.labels[l] + "' has " + std::to_string(counts[l]) +
                      " example(s), at least 2 are required");
    }
  }
  const netkit::Network net(model.spec);
  std::vector<netkit::Sample> samples;
  samples.reserve(data.size());
  for (const auto& d : data) {
    if (d.feature->planes.shape() != net.input_shape()) {
      throw DimensionMismatchError("train_attribute_model: feature of '" + d.feature->image_id + "' has shape " +
                                   to_string(d.feature->planes.shape()) + ", network expects " +
                                   to_string(net.input_shape()));
    }
    samples.push_back({d.feature->planes, d.label});
  }
  auto result = netkit::train(net, net.init_parameters(config.seed), samples, config, callbacks);
  netkit::round_to_checkpoint_precision(result.params);
  model.params = std::move(result.params);
  return {std::move(model), std::move(result.history)};
}

Classification classify(const AttributeModel& model, const FeatureVector& f) {
  const netkit::Network net(model.spec);
  if (f.planes.shape() != net.input_shape()) {
    throw DimensionMismatchError("classify: feature shape " + to_string(f.planes.shape()) +
                                 " does not match the model input " + to_string(net.input_shape()));
  }
  const Tensor p = net.predict(model.params, f.planes);
  Classification c;
  c.probabilities = p.storage();
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[c.label]) c.label = i;
  }
  return c;
}

void save_attribute_model(const std::filesystem::path& path, const AttributeModel& model) {
  model.validate();
  netkit::CheckpointMeta meta{"attribute", model.config, model.config.epochs, model.config.seed,
                              nlohmann::json{{"scheme", model.scheme}}};
  netkit::save_checkpoint(path, model.spec, model.params, meta);
}

AttributeModel load_attribute_model(const std::filesystem::path& path) {
  auto ck = netkit::load_checkpoint(path);
  if (ck.meta.role != "attribute" || !ck.meta.extra.contains("scheme")) {
    throw CompatibilityError(path.string() + ": checkpoint role '" + ck.meta.role + "' is not an attribute model");
  }
  AttributeModel m;
  m.spec = std::move(ck.spec);
  m.params = std::move(ck.params);
  m.config = ck.meta.config;
  try {
    m.scheme = ck.meta.extra.at("scheme").get<AttributeScheme>();
  } catch (const std::exception& e) {
    throw FormatError(path.string() + ": bad attribute scheme: " + e.what());
  }
  m.validate();
  return m;
}

}  // namespace faceparse::attrclass
