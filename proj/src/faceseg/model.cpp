#include "faceparse/faceseg/model.hpp"

#include "faceparse/error.hpp"
#include "faceparse/fileio.hpp"
#include "faceparse/tensor/checksum.hpp"
#include "faceparse/tensor/rng.hpp"

namespace faceparse::faceseg {

using nlohmann::json;

void SegTrainingConfig::validate() const {
  plan.validate();
  if (quota < 1) throw ConfigError("segmentation: per-class quota must be >= 1");
  train.validate();
}

void to_json(json& j, const SegTrainingConfig& c) {
  j = json{{"plan", c.plan}, {"quota", c.quota}, {"normalize_illumination", c.normalize_illumination}, {"train", c.train}};
}

void from_json(const json& j, SegTrainingConfig& c) {
  const SegTrainingConfig d;
  c.plan = j.value("plan", d.plan);
  c.quota = j.value("quota", d.quota);
  c.normalize_illumination = j.value("normalize_illumination", d.normalize_illumination);
  c.train = j.value("train", d.train);
  c.validate();
}

namespace {

netkit::CheckpointMeta meta_of(const SegModel& m) {
  return {"segmentation", m.config.train, m.config.train.epochs, m.config.train.seed, json{{"segmentation", m.config}}};
}

Tensor preprocess(const SegTrainingConfig& c, const Tensor& image) {
  return c.normalize_illumination ? dataio::normalize_illumination(image) : image;
}

}  // namespace

std::string SegModel::id() const { return hex64(fnv1a64(encode_segmentation_model(*this))); }

SegTraining train_segmentation_model(std::span<const LabeledImage> data, const netkit::NetworkSpec& spec,
                                     const SegTrainingConfig& config, const netkit::TrainCallbacks& callbacks) {
  config.validate();
  if (data.empty()) throw DataError("segmentation training: no labeled images");
  const netkit::Network net(spec);
  if (spec.class_count != kClassCount) {
    throw ConfigError("segmentation training: network predicts " + std::to_string(spec.class_count) +
                      " classes, expected " + std::to_string(kClassCount));
  }
  std::vector<netkit::Sample> samples;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& d = data[i];
    dataio::require_paired(*d.image, *d.mask, d.id);
    PatchSet set = sample_training_patches(preprocess(config, *d.image), *d.mask, config.plan,
                                           derive_seed(config.train.seed, 0x5E6, i), config.quota);
    for (auto& s : set.samples) samples.push_back(std::move(s));
  }
  if (!samples.empty() && samples.front().input.shape() != spec.input_shape) {
    throw CompatibilityError("segmentation training: patch shape does not match the network input");
  }
  SegTraining out;
  out.patch_count = samples.size();
  auto result = netkit::train(net, net.init_parameters(config.train.seed), samples, config.train, callbacks);
  netkit::round_to_checkpoint_precision(result.params);
  out.model = SegModel{spec, std::move(result.params), config};
  out.history = std::move(result.history);
  return out;
}

ProbabilityMaps segment_image(const SegModel& model, const Tensor& image, const std::string& image_id) {
  const netkit::Network net(model.spec);
  ProbabilityMaps p = segment(net, model.params, preprocess(model.config, image), model.config.plan);
  p.model_id = model.id();
  p.image_id = image_id;
  return p;
}

std::vector<std::byte> encode_segmentation_model(const SegModel& model) {
  return netkit::encode_checkpoint(model.spec, model.params, meta_of(model));
}

void save_segmentation_model(const std::filesystem::path& path, const SegModel& model) {
  netkit::save_checkpoint(path, model.spec, model.params, meta_of(model));
}

SegModel load_segmentation_model(const std::filesystem::path& path) {
  auto ck = netkit::load_checkpoint(path);
  if (ck.meta.role != "segmentation" || !ck.meta.extra.contains("segmentation")) {
    throw CompatibilityError(path.string() + ": checkpoint role '" + ck.meta.role + "' is not a segmentation model");
  }
  SegModel m{std::move(ck.spec), std::move(ck.params), {}};
  try {
    m.config = ck.meta.extra.at("segmentation").get<SegTrainingConfig>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(path.string() + ": bad segmentation config: " + e.what());
  }
  if (m.spec.class_count != kClassCount) throw CompatibilityError(path.string() + ": not a 7-class network");
  return m;
}

}  // namespace faceparse::faceseg
