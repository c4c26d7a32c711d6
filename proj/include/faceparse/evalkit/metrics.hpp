#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "faceparse/dataio/image.hpp"
#include "faceparse/palette.hpp"

namespace faceparse::evalkit {

/// Pixel tallies of a 7-class segmentation. confusion[t][p] counts pixels of
/// true class t predicted as p. Per-class scores are nullopt when undefined
/// (zero denominator), never 0.
struct SegMetrics {
  std::array<std::array<std::uint64_t, kClassCount>, kClassCount> confusion{};

  std::uint64_t total() const;
  std::uint64_t correct() const;
  std::uint64_t class_pixels(std::size_t c) const;  // row sum
  double accuracy() const;                          // 0 for an empty tally
  std::optional<double> precision(std::size_t c) const;
  std::optional<double> recall(std::size_t c) const;
  std::optional<double> f1(std::size_t c) const;
  std::optional<double> iou(std::size_t c) const;

  SegMetrics& operator+=(const SegMetrics& other);
  friend bool operator==(const SegMetrics&, const SegMetrics&) = default;
};

/// DimensionMismatchError unless both masks share a size.
SegMetrics seg_metrics(const dataio::LabelMask& predicted, const dataio::LabelMask& truth);

nlohmann::json seg_metrics_json(const SegMetrics& m);

/// Classification tallies over `labels.size()` classes.
struct ClsMetrics {
  std::vector<std::string> labels;
  std::vector<std::vector<std::uint64_t>> confusion;  // [truth][predicted]
  std::vector<double> fold_accuracy;                  // by fold index

  explicit ClsMetrics(std::vector<std::string> label_names = {});

  void add(std::size_t truth, std::size_t predicted);
  std::uint64_t total() const;
  double accuracy() const;
  std::optional<double> precision(std::size_t c) const;
  std::optional<double> recall(std::size_t c) const;
  double fold_mean() const;
  /// Sample standard deviation (n - 1); 0 with fewer than two folds.
  double fold_std() const;

  friend bool operator==(const ClsMetrics&, const ClsMetrics&) = default;
};

nlohmann::json cls_metrics_json(const ClsMetrics& m);

}  // namespace faceparse::evalkit
