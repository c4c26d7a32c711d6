#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "faceparse/faceseg/probability_maps.hpp"

namespace faceparse::importance {

inline constexpr std::size_t kSummaryWidth = 3 * kClassCount;

/// Per class c: mean(PM_c), population std(PM_c) and the share of pixels
/// whose argmax is c, at indices 3c, 3c+1, 3c+2.
struct SummaryFeatures {
  std::array<double, kSummaryWidth> values{};
  std::size_t label = 0;
};

SummaryFeatures extract_summary(const faceseg::ProbabilityMaps& pms, std::size_t label);

/// "skin.mean", "skin.std", "skin.area", ... in summary order.
std::vector<std::string> summary_feature_names();

struct ForestConfig {
  std::size_t trees = 100;
  std::size_t max_depth = 32;
  std::size_t min_samples_leaf = 1;
  std::size_t features_per_split = 0;  // 0: ceil(sqrt(d))
  bool bootstrap = true;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const ForestConfig&, const ForestConfig&) = default;
};

void to_json(nlohmann::json& j, const ForestConfig& c);
void from_json(const nlohmann::json& j, ForestConfig& c);

struct TreeNode {
  // Internal nodes: samples with x[feature] <= threshold go left.
  std::size_t feature = 0;
  double threshold = 0.0;
  std::size_t left = 0, right = 0;
  bool leaf = true;
  std::vector<double> class_share;  // leaf class distribution

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;          // nodes[0] is the root
  std::vector<double> impurity_drop;    // per feature, weighted Gini decrease
  std::vector<std::size_t> in_bag;      // draw count per training sample

  friend bool operator==(const Tree&, const Tree&) = default;
};

/// Rows of a feature table with integer class labels.
struct Dataset {
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> labels;
  std::size_t class_count = 0;

  std::size_t features() const { return rows.empty() ? 0 : rows[0].size(); }
};

Dataset summary_dataset(std::span<const SummaryFeatures> items, std::size_t class_count);

struct Forest {
  ForestConfig config;
  std::size_t features = 0;
  std::size_t class_count = 0;
  std::vector<Tree> trees;
  /// Accuracy of the mean class distribution over the trees that did not
  /// see each sample; nullopt when no sample was ever out of bag.
  std::optional<double> oob_accuracy;

  /// Mean of the per-tree class distributions, argmax with ties to the
  /// lowest class.
  std::size_t predict(std::span<const double> row) const;
  std::vector<double> predict_proba(std::span<const double> row) const;

  friend bool operator==(const Forest&, const Forest&) = default;
};

/// Bagged CART trees on Gini impurity. Each tree draws from its own stream
/// derived from (seed, tree index). At every node features are tried in a
/// random order; the search stops after features_per_split candidates once a
/// valid split exists and otherwise continues through the remaining ones.
Forest train_forest(const Dataset& data, const ForestConfig& config);

struct ImportanceReport {
  std::vector<std::string> feature_names;
  std::vector<double> feature_scores;  // normalized mean decrease in impurity
  /// Present for 21-wide summary tables: sum of each class's three scores.
  std::optional<std::array<double, kClassCount>> class_scores;
  std::vector<std::size_t> class_ranking;  // descending, ties by index
  bool uninformative = false;              // no tree ever split
  std::optional<std::vector<double>> permutation_scores;
};

/// Per-tree drops are normalized to sum 1, averaged over trees and
/// renormalized. A forest without any split reports all zeros and sets
/// `uninformative`.
ImportanceReport importance_report(const Forest& forest, std::vector<std::string> feature_names = {});

/// Mean drop in training-set accuracy when one column is shuffled.
std::vector<double> permutation_importance(const Forest& forest, const Dataset& data, std::uint64_t seed,
                                           std::size_t repeats = 5);

nlohmann::json report_to_json(const ImportanceReport& r);

/// Bar chart of the class scores on white: one palette-colored column per
/// class in palette order, heights relative to the largest score. RGB,
/// 280 x 200; classes without scores leave the canvas blank.
std::vector<std::uint8_t> render_importance_chart(const ImportanceReport& r, std::size_t& width, std::size_t& height);

}  // namespace faceparse::importance
