#include "faceparse/evalkit/report.hpp"

#include <algorithm>
#include <cmath>

#include "faceparse/dataio/png.hpp"
#include "faceparse/fileio.hpp"

namespace faceparse::evalkit {

using nlohmann::json;

json report_json(const KfoldResult& r) {
  json folds = json::array();
  bool clean = true;
  for (const auto& f : r.folds) {
    clean = clean && f.clean();
    json logs = json::array();
    for (const auto& l : f.logs) {
      json hashes = json::array();
      for (auto h : l.id_hashes) hashes.push_back(hex64(h));
      logs.push_back({{"stage", l.stage}, {"count", l.id_hashes.size()}, {"id_hashes", hashes}});
    }
    json preds = json::array();
    for (const auto& p : f.predictions) {
      preds.push_back({{"id", p.id}, {"truth", r.attribute.labels.at(p.truth)}, {"predicted", r.attribute.labels.at(p.predicted)}});
    }
    json test_hashes = json::array();
    for (const auto& id : f.test_ids) test_hashes.push_back(hex64(id_hash(id)));
    folds.push_back({{"fold", f.fold},
                     {"test_ids", f.test_ids},
                     {"test_id_hashes", test_hashes},
                     {"segmentation_model", f.seg_model_id},
                     {"segmentation_patches", f.seg_patches},
                     {"heldout_pixel_accuracy", f.seg_heldout.total() ? json(f.seg_heldout.accuracy()) : json(nullptr)},
                     {"attribute_accuracy", f.attr_accuracy ? json(*f.attr_accuracy) : json(nullptr)},
                     {"permuted_accuracy", f.permuted_accuracy ? json(*f.permuted_accuracy) : json(nullptr)},
                     {"predictions", preds},
                     {"training_logs", logs},
                     {"clean", f.clean()}});
  }

  json doc{{"format", kMetricsFormat},
           {"version", kMetricsVersion},
           {"k", r.plan.k},
           {"seed", r.plan.seed},
           {"stratified", r.plan.stratified},
           {"warnings", r.warnings},
           {"shared_segmentation_model", r.shared_seg_model},
           {"fold_hygiene", clean},
           {"segmentation",
            {{"fold_accuracy", r.seg_fold_accuracy()}, {"fold_mean", r.seg_fold_mean()}, {"pooled", seg_metrics_json(r.segmentation)}}},
           {"attribute", cls_metrics_json(r.attribute)},
           {"folds", folds}};
  if (r.permuted) {
    const double dev = std::abs(r.permuted->accuracy() - r.chance());
    doc["permutation_control"] = {{"metrics", cls_metrics_json(*r.permuted)},
                                  {"chance", r.chance()},
                                  {"sigma", r.chance_sigma()},
                                  {"within_3_sigma", dev <= 3.0 * r.chance_sigma()}};
  } else {
    doc["permutation_control"] = nullptr;
  }
  if (r.importance) {
    doc["importance"] = importance::report_to_json(*r.importance);
    doc["importance"]["oob_accuracy"] = r.forest_oob_accuracy ? json(*r.forest_oob_accuracy) : json(nullptr);
  } else {
    doc["importance"] = nullptr;
    doc["importance_note"] = "no importance run; chart omitted";
  }
  return doc;
}

std::vector<std::uint8_t> render_confusion(const std::vector<std::vector<std::uint64_t>>& confusion,
                                           const std::vector<std::array<std::uint8_t, 3>>& row_colors,
                                           std::size_t& width, std::size_t& height) {
  constexpr std::size_t kCell = 24, kStrip = 6;
  const std::size_t n = confusion.size();
  const std::size_t left = row_colors.empty() ? 0 : kStrip;
  width = left + n * kCell;
  height = n * kCell;
  std::vector<std::uint8_t> px(width * height * 3, 255);
  for (std::size_t t = 0; t < n; ++t) {
    std::uint64_t row = 0;
    for (auto v : confusion[t]) row += v;
    for (std::size_t y = t * kCell; y < (t + 1) * kCell; ++y) {
      for (std::size_t x = 0; x < left; ++x)
        for (std::size_t c = 0; c < 3; ++c) px[(y * width + x) * 3 + c] = row_colors[t][c];
      for (std::size_t p = 0; p < n; ++p) {
        const double share = row ? static_cast<double>(confusion[t][p]) / static_cast<double>(row) : 0.0;
        const auto g = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - share)));
        for (std::size_t x = left + p * kCell; x < left + (p + 1) * kCell; ++x) {
          // One-pixel grid lines keep empty cells visible.
          const bool edge = x == left + p * kCell || y == t * kCell;
          for (std::size_t c = 0; c < 3; ++c) px[(y * width + x) * 3 + c] = edge ? 200 : g;
        }
      }
    }
  }
  return px;
}

std::vector<std::filesystem::path> emit_report(const KfoldResult& r, const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  const auto metrics = dir / "metrics.json";
  write_file_atomic(metrics, report_json(r).dump(2) + "\n");
  out.push_back(metrics);

  std::size_t w = 0, h = 0;
  auto px = render_confusion(r.attribute.confusion, {}, w, h);
  out.push_back(dir / "confusion_attribute.png");
  dataio::write_png(out.back(), w, h, 3, px);

  std::vector<std::vector<std::uint64_t>> seg(kClassCount);
  std::vector<std::array<std::uint8_t, 3>> colors;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    seg[c].assign(r.segmentation.confusion[c].begin(), r.segmentation.confusion[c].end());
    colors.push_back(kPalette[c].color);
  }
  px = render_confusion(seg, colors, w, h);
  out.push_back(dir / "confusion_segmentation.png");
  dataio::write_png(out.back(), w, h, 3, px);

  const auto chart = dir / "importance.png";
  if (r.importance) {
    px = importance::render_importance_chart(*r.importance, w, h);
    dataio::write_png(chart, w, h, 3, px);
    out.push_back(chart);
  } else {
    std::error_code ec;
    std::filesystem::remove(chart, ec);  // a stale chart would contradict the metrics
  }
  return out;
}

}  // namespace faceparse::evalkit
