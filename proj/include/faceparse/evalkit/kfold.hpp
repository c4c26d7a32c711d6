#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "faceparse/attrclass/attribute.hpp"
#include "faceparse/dataio/manifest.hpp"
#include "faceparse/evalkit/metrics.hpp"
#include "faceparse/faceseg/model.hpp"
#include "faceparse/importance/forest.hpp"

namespace faceparse::evalkit {

struct KfoldConfig {
  std::size_t k = 10;
  std::uint64_t seed = 0;
  netkit::NetworkSpec seg_network;
  faceseg::SegTrainingConfig seg;
  netkit::NetworkSpec attr_network;  // input shape fixes the feature size
  netkit::TrainConfig attr;
  /// Train one segmentation model on every masked entry and reuse it in all
  /// folds. Held-out images then leak into segmentation training.
  bool shared_seg_model = false;
  /// Also train on labels permuted across the dataset, reusing each fold's PMs.
  bool permutation_control = true;
  std::optional<importance::ForestConfig> forest;
  /// When set, per-fold checkpoints go to <dir>/fold_NN/.
  std::optional<std::filesystem::path> artifact_dir;
};

/// Ids (as FNV-1a 64 hashes) fed to one training stage.
struct TrainingLog {
  std::string stage;
  std::vector<std::uint64_t> id_hashes;
};

std::uint64_t id_hash(const std::string& id);

struct Prediction {
  std::string id;
  std::size_t truth = 0;
  std::size_t predicted = 0;
};

struct FoldResult {
  std::size_t fold = 0;
  std::vector<std::string> test_ids;
  std::vector<TrainingLog> logs;
  std::string seg_model_id;
  std::size_t seg_patches = 0;
  SegMetrics seg_heldout;
  std::vector<Prediction> predictions;
  std::optional<double> attr_accuracy;
  std::optional<double> permuted_accuracy;

  /// No held-out id appears in any training log of this fold.
  bool clean() const;
};

struct KfoldResult {
  dataio::FoldPlan plan;
  std::vector<FoldResult> folds;
  ClsMetrics attribute;
  std::optional<ClsMetrics> permuted;
  SegMetrics segmentation;  // pooled held-out tallies
  std::optional<importance::ImportanceReport> importance;
  std::optional<double> forest_oob_accuracy;
  std::vector<std::string> warnings;
  bool shared_seg_model = false;

  /// Mean over folds of held-out pixel accuracy (folds without masks skipped).
  double seg_fold_mean() const;
  std::vector<double> seg_fold_accuracy() const;
  double chance() const;
  /// Binomial standard error of the accuracy expected by chance.
  double chance_sigma() const;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Per fold: train segmentation on the training split's masks, produce PMs
/// for every entry, build features, train the attribute model on the
/// training split's labels and score the held-out labels. A manifest without
/// any label runs the segmentation stages only. Stage failures are
/// rethrown with the fold and stage named, keeping their error category.
KfoldResult run_kfold(const dataio::DatasetManifest& manifest, const KfoldConfig& config,
                      const ProgressFn& progress = {});

}  // namespace faceparse::evalkit
