#include "faceparse/evalkit/kfold.hpp"

#include <algorithm>
#include <cmath>

#include "faceparse/error.hpp"
#include "faceparse/tensor/checksum.hpp"
#include "faceparse/tensor/rng.hpp"

namespace faceparse::evalkit {

namespace {

// Stream tags for seeds derived from the run seed.
constexpr std::uint64_t kSegStream = 1, kAttrStream = 2, kPermAttrStream = 3, kPermLabelStream = 4,
                        kForestStream = 5;

[[noreturn]] void rethrow_in(const std::string& where) {
  try {
    throw;
  } catch (const DataError& e) {
    throw DataError(where + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const TrainingError& e) {
    throw TrainingError(where + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(where + ": " + e.what());
  }
}

template <class F>
auto stage(const std::string& where, F&& f) {
  try {
    return f();
  } catch (...) {
    rethrow_in(where);
  }
}

std::string fold_name(std::size_t f) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "fold_%02zu", f);
  return buf;
}

struct Item {
  const dataio::ManifestEntry* entry;
  Tensor image;
  std::optional<dataio::LabelMask> mask;
};

struct SegStage {
  faceseg::SegModel model;
  std::size_t patches = 0;
  TrainingLog log;
};

SegStage train_seg(const std::vector<Item>& items, const std::vector<std::size_t>& indices, const KfoldConfig& cfg,
                   std::uint64_t seed) {
  std::vector<faceseg::LabeledImage> data;
  SegStage s;
  s.log.stage = "segmentation";
  for (auto i : indices) {
    if (!items[i].mask) continue;
    data.push_back({&items[i].image, &*items[i].mask, items[i].entry->id});
    s.log.id_hashes.push_back(id_hash(items[i].entry->id));
  }
  if (data.empty()) throw DataError("no masked entries to train segmentation on");
  auto sc = cfg.seg;
  sc.train.seed = seed;
  auto r = faceseg::train_segmentation_model(data, cfg.seg_network, sc);
  s.model = std::move(r.model);
  s.patches = r.patch_count;
  return s;
}

struct AttrStage {
  std::optional<double> accuracy;
  std::vector<Prediction> predictions;
  TrainingLog log;
  std::optional<attrclass::AttributeModel> model;
};

AttrStage run_attr(const std::vector<Item>& items, const std::vector<attrclass::FeatureVector>& features,
                   const std::vector<std::optional<std::size_t>>& labels, const std::vector<std::size_t>& train,
                   const std::vector<std::size_t>& test, const dataio::AttributeScheme& scheme,
                   const KfoldConfig& cfg, std::uint64_t seed, const std::string& log_name) {
  AttrStage s;
  s.log.stage = log_name;
  std::vector<attrclass::LabeledFeature> data;
  for (auto i : train) {
    if (!labels[i]) continue;
    data.push_back({&features[i], *labels[i]});
    s.log.id_hashes.push_back(id_hash(items[i].entry->id));
  }
  auto tc = cfg.attr;
  tc.seed = seed;
  auto trained = attrclass::train_attribute_model(data, scheme, cfg.attr_network, tc);
  std::size_t ok = 0;
  for (auto i : test) {
    if (!labels[i]) continue;
    const auto c = attrclass::classify(trained.model, features[i]);
    s.predictions.push_back({items[i].entry->id, *labels[i], c.label});
    ok += c.label == *labels[i];
  }
  if (!s.predictions.empty()) s.accuracy = static_cast<double>(ok) / static_cast<double>(s.predictions.size());
  s.model = std::move(trained.model);
  return s;
}

}  // namespace

std::uint64_t id_hash(const std::string& id) { return fnv1a64(std::string_view(id)); }

bool FoldResult::clean() const {
  for (const auto& id : test_ids) {
    const auto h = id_hash(id);
    for (const auto& log : logs) {
      if (std::find(log.id_hashes.begin(), log.id_hashes.end(), h) != log.id_hashes.end()) return false;
    }
  }
  return true;
}

std::vector<double> KfoldResult::seg_fold_accuracy() const {
  std::vector<double> out;
  for (const auto& f : folds) {
    if (f.seg_heldout.total()) out.push_back(f.seg_heldout.accuracy());
  }
  return out;
}

double KfoldResult::seg_fold_mean() const {
  const auto acc = seg_fold_accuracy();
  if (acc.empty()) return 0.0;
  double s = 0.0;
  for (double a : acc) s += a;
  return s / static_cast<double>(acc.size());
}

double KfoldResult::chance() const {
  return attribute.labels.empty() ? 0.0 : 1.0 / static_cast<double>(attribute.labels.size());
}

double KfoldResult::chance_sigma() const {
  const auto n = permuted ? permuted->total() : attribute.total();
  if (n == 0) return 0.0;
  const double p = chance();
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

KfoldResult run_kfold(const dataio::DatasetManifest& manifest, const KfoldConfig& config, const ProgressFn& progress) {
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  config.seg.validate();
  config.attr.validate();
  if (config.forest) config.forest->validate();
  const auto labels = manifest.labels();
  const bool labeled = std::any_of(labels.begin(), labels.end(), [](const auto& l) { return l.has_value(); });
  if (labeled && !manifest.scheme) throw DataError("k-fold: labeled manifest has no attribute scheme");
  const dataio::AttributeScheme scheme = manifest.scheme.value_or(dataio::AttributeScheme{});
  if (config.attr_network.input_shape.size() != 3 || config.attr_network.input_shape[0] != attrclass::kFeaturePlanes) {
    throw ConfigError("k-fold: attribute network must take " + std::to_string(attrclass::kFeaturePlanes) +
                      "-plane input");
  }
  const std::size_t fh = config.attr_network.input_shape[1], fw = config.attr_network.input_shape[2];

  KfoldResult result;
  result.shared_seg_model = config.shared_seg_model;
  result.plan = dataio::make_folds(manifest, config.k, config.seed);
  result.warnings = result.plan.warnings;
  for (const auto& w : result.warnings) say("warning: " + w);
  result.attribute = ClsMetrics(scheme.labels);

  std::vector<Item> items;
  stage("loading data", [&] {
    for (const auto& e : manifest.entries) {
      Item it{&e, dataio::load_image(manifest.resolve(e.image)), std::nullopt};
      if (e.mask) {
        it.mask = dataio::load_mask(manifest.resolve(*e.mask));
        dataio::require_paired(it.image, *it.mask, e.id);
      }
      items.push_back(std::move(it));
    }
    return 0;
  });
  const std::size_t n = items.size();

  std::optional<std::vector<std::optional<std::size_t>>> permuted;
  if (labeled && config.permutation_control) {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i]) order.push_back(i);
    }
    std::vector<std::size_t> values;
    for (auto i : order) values.push_back(*labels[i]);
    Rng rng(derive_seed(config.seed, kPermLabelStream));
    rng.shuffle(std::span(values));
    permuted.emplace(n);
    for (std::size_t k = 0; k < order.size(); ++k) (*permuted)[order[k]] = values[k];
    result.permuted = ClsMetrics(scheme.labels);
  }

  std::optional<SegStage> shared;
  if (config.shared_seg_model) {
    say("training shared segmentation model");
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    shared = stage("shared segmentation training", [&] { return train_seg(items, all, config, derive_seed(config.seed, kSegStream)); });
  }

  // Summary features of each image's PMs from the fold that held it out.
  std::vector<std::optional<importance::SummaryFeatures>> summaries(n);

  for (std::size_t f = 0; f < config.k; ++f) {
    const std::string where = fold_name(f);
    const auto train = result.plan.train_indices(f);
    const auto test = result.plan.test_indices(f);
    FoldResult fr;
    fr.fold = f;
    for (auto i : test) fr.test_ids.push_back(items[i].entry->id);

    say(where + ": segmentation training");
    SegStage seg = shared ? *shared
                          : stage(where + ", segmentation training",
                                  [&] { return train_seg(items, train, config, derive_seed(config.seed, kSegStream, f)); });
    fr.logs.push_back(seg.log);
    fr.seg_patches = seg.patches;
    fr.seg_model_id = seg.model.id();

    say(where + ": segmenting " + std::to_string(n) + " images");
    std::vector<attrclass::FeatureVector> features(n);
    stage(where + ", segmentation", [&] {
      std::vector<bool> held(n, false);
      for (auto i : test) held[i] = true;
      for (std::size_t i = 0; i < n; ++i) {
        const auto pms = faceseg::segment_image(seg.model, items[i].image, items[i].entry->id);
        features[i] = attrclass::build_feature_vector(pms, fh, fw);
        if (!held[i]) continue;
        if (items[i].mask) fr.seg_heldout += seg_metrics(faceseg::argmax_mask(pms), *items[i].mask);
        if (labels[i]) summaries[i] = importance::extract_summary(pms, *labels[i]);
      }
      return 0;
    });
    result.segmentation += fr.seg_heldout;

    if (!labeled) {
      say(where + ": held-out pixel accuracy " + std::to_string(fr.seg_heldout.accuracy()));
      if (config.artifact_dir) {
        stage(where + ", artifacts", [&] {
          faceseg::save_segmentation_model(*config.artifact_dir / where / "segmentation.fpkt", seg.model);
          return 0;
        });
      }
      result.folds.push_back(std::move(fr));
      continue;
    }
    say(where + ": attribute training");
    auto attr = stage(where + ", attribute training", [&] {
      return run_attr(items, features, labels, train, test, scheme, config, derive_seed(config.seed, kAttrStream, f),
                      "attribute");
    });
    fr.logs.push_back(attr.log);
    fr.attr_accuracy = attr.accuracy;
    fr.predictions = attr.predictions;
    for (const auto& p : attr.predictions) result.attribute.add(p.truth, p.predicted);
    if (attr.accuracy) result.attribute.fold_accuracy.push_back(*attr.accuracy);

    if (permuted) {
      say(where + ": permutation control");
      auto perm = stage(where + ", permutation control", [&] {
        return run_attr(items, features, *permuted, train, test, scheme, config,
                        derive_seed(config.seed, kPermAttrStream, f), "attribute-permuted");
      });
      fr.logs.push_back(perm.log);
      fr.permuted_accuracy = perm.accuracy;
      for (const auto& p : perm.predictions) result.permuted->add(p.truth, p.predicted);
      if (perm.accuracy) result.permuted->fold_accuracy.push_back(*perm.accuracy);
    }

    if (config.artifact_dir) {
      stage(where + ", artifacts", [&] {
        const auto dir = *config.artifact_dir / where;
        faceseg::save_segmentation_model(dir / "segmentation.fpkt", seg.model);
        attrclass::save_attribute_model(dir / "attribute.fpkt", *attr.model);
        return 0;
      });
    }
    std::string line = where + ": held-out pixel accuracy " + std::to_string(fr.seg_heldout.accuracy());
    if (fr.attr_accuracy) line += ", attribute accuracy " + std::to_string(*fr.attr_accuracy);
    say(line);
    result.folds.push_back(std::move(fr));
  }

  if (config.forest) {
    std::vector<importance::SummaryFeatures> rows;
    for (const auto& s : summaries) {
      if (s) rows.push_back(*s);
    }
    if (!rows.empty()) {
      say("importance: training forest on " + std::to_string(rows.size()) + " held-out summaries");
      auto fc = *config.forest;
      fc.seed = derive_seed(config.seed, kForestStream);
      const auto data = importance::summary_dataset(rows, scheme.class_count());
      const auto forest = stage("importance", [&] { return importance::train_forest(data, fc); });
      result.importance = importance::importance_report(forest);
      result.forest_oob_accuracy = forest.oob_accuracy;
    }
  }
  return result;
}

}  // namespace faceparse::evalkit
