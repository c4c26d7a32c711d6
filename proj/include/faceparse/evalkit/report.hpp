#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"

#include "faceparse/evalkit/kfold.hpp"

namespace faceparse::evalkit {

inline constexpr const char* kMetricsFormat = "faceparse-metrics";
inline constexpr int kMetricsVersion = 1;

/// The metrics document written to metrics.json.
nlohmann::json report_json(const KfoldResult& r);

/// Row-normalized confusion matrix as RGB: 24 px cells, darker means a
/// larger share of the row; rows and columns follow label order. A 6 px
/// strip of `row_colors` (when given) marks each row.
std::vector<std::uint8_t> render_confusion(const std::vector<std::vector<std::uint64_t>>& confusion,
                                           const std::vector<std::array<std::uint8_t, 3>>& row_colors,
                                           std::size_t& width, std::size_t& height);

/// Writes into `dir`:
///   metrics.json                 versioned metrics, per-fold results, hygiene logs
///   confusion_attribute.png      attribute confusion, scheme order
///   confusion_segmentation.png   pooled held-out pixel confusion, palette order
///   importance.png               class importance bars (only with an importance run)
/// Output is a pure function of `r`. Returns the written paths.
std::vector<std::filesystem::path> emit_report(const KfoldResult& r, const std::filesystem::path& dir);

}  // namespace faceparse::evalkit
