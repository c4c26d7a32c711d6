#include "faceparse/evalkit/metrics.hpp"

#include <cmath>

#include "faceparse/error.hpp"

namespace faceparse::evalkit {

using nlohmann::json;

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::uint64_t SegMetrics::total() const {
  std::uint64_t n = 0;
  for (const auto& row : confusion)
    for (auto v : row) n += v;
  return n;
}

std::uint64_t SegMetrics::correct() const {
  std::uint64_t n = 0;
  for (std::size_t c = 0; c < kClassCount; ++c) n += confusion[c][c];
  return n;
}

std::uint64_t SegMetrics::class_pixels(std::size_t c) const {
  std::uint64_t n = 0;
  for (auto v : confusion[c]) n += v;
  return n;
}

double SegMetrics::accuracy() const { return ratio(correct(), total()).value_or(0.0); }

std::optional<double> SegMetrics::precision(std::size_t c) const {
  std::uint64_t col = 0;
  for (std::size_t t = 0; t < kClassCount; ++t) col += confusion[t][c];
  return ratio(confusion[c][c], col);
}

std::optional<double> SegMetrics::recall(std::size_t c) const { return ratio(confusion[c][c], class_pixels(c)); }

std::optional<double> SegMetrics::f1(std::size_t c) const {
  std::uint64_t col = 0;
  for (std::size_t t = 0; t < kClassCount; ++t) col += confusion[t][c];
  // 2TP / (2TP + FP + FN) = 2TP / (row + col)
  return ratio(2 * confusion[c][c], class_pixels(c) + col);
}

std::optional<double> SegMetrics::iou(std::size_t c) const {
  std::uint64_t col = 0;
  for (std::size_t t = 0; t < kClassCount; ++t) col += confusion[t][c];
  return ratio(confusion[c][c], class_pixels(c) + col - confusion[c][c]);
}

SegMetrics& SegMetrics::operator+=(const SegMetrics& other) {
  for (std::size_t t = 0; t < kClassCount; ++t)
    for (std::size_t p = 0; p < kClassCount; ++p) confusion[t][p] += other.confusion[t][p];
  return *this;
}

SegMetrics seg_metrics(const dataio::LabelMask& predicted, const dataio::LabelMask& truth) {
  if (predicted.width() != truth.width() || predicted.height() != truth.height()) {
    throw DimensionMismatchError("seg_metrics: prediction " + std::to_string(predicted.width()) + "x" +
                                 std::to_string(predicted.height()) + " vs truth " + std::to_string(truth.width()) +
                                 "x" + std::to_string(truth.height()));
  }
  SegMetrics m;
  for (std::size_t y = 0; y < truth.height(); ++y)
    for (std::size_t x = 0; x < truth.width(); ++x) ++m.confusion[truth.at(x, y)][predicted.at(x, y)];
  return m;
}

json seg_metrics_json(const SegMetrics& m) {
  json classes = json::array();
  for (std::size_t c = 0; c < kClassCount; ++c) {
    classes.push_back({{"class", kPalette[c].name},
                       {"pixels", m.class_pixels(c)},
                       {"precision", optional_json(m.precision(c))},
                       {"recall", optional_json(m.recall(c))},
                       {"f1", optional_json(m.f1(c))},
                       {"iou", optional_json(m.iou(c))}});
  }
  return json{{"pixels", m.total()}, {"pixel_accuracy", m.accuracy()}, {"classes", classes}, {"confusion", m.confusion}};
}

ClsMetrics::ClsMetrics(std::vector<std::string> label_names)
    : labels(std::move(label_names)),
      confusion(labels.size(), std::vector<std::uint64_t>(labels.size(), 0)) {}

void ClsMetrics::add(std::size_t truth, std::size_t predicted) {
  if (truth >= labels.size() || predicted >= labels.size()) {
    throw ShapeError("ClsMetrics: label index outside [0, " + std::to_string(labels.size()) + ")");
  }
  ++confusion[truth][predicted];
}

std::uint64_t ClsMetrics::total() const {
  std::uint64_t n = 0;
  for (const auto& row : confusion)
    for (auto v : row) n += v;
  return n;
}

double ClsMetrics::accuracy() const {
  std::uint64_t ok = 0;
  for (std::size_t c = 0; c < labels.size(); ++c) ok += confusion[c][c];
  return ratio(ok, total()).value_or(0.0);
}

std::optional<double> ClsMetrics::precision(std::size_t c) const {
  std::uint64_t col = 0;
  for (const auto& row : confusion) col += row[c];
  return ratio(confusion[c][c], col);
}

std::optional<double> ClsMetrics::recall(std::size_t c) const {
  std::uint64_t row = 0;
  for (auto v : confusion[c]) row += v;
  return ratio(confusion[c][c], row);
}

double ClsMetrics::fold_mean() const {
  if (fold_accuracy.empty()) return 0.0;
  double s = 0.0;
  for (double a : fold_accuracy) s += a;
  return s / static_cast<double>(fold_accuracy.size());
}

double ClsMetrics::fold_std() const {
  if (fold_accuracy.size() < 2) return 0.0;
  const double mean = fold_mean();
  double sq = 0.0;
  for (double a : fold_accuracy) sq += (a - mean) * (a - mean);
  return std::sqrt(sq / static_cast<double>(fold_accuracy.size() - 1));
}

json cls_metrics_json(const ClsMetrics& m) {
  json per = json::array();
  for (std::size_t c = 0; c < m.labels.size(); ++c) {
    per.push_back({{"label", m.labels[c]}, {"precision", optional_json(m.precision(c))}, {"recall", optional_json(m.recall(c))}});
  }
  return json{{"samples", m.total()},
              {"accuracy", m.accuracy()},
              {"fold_accuracy", m.fold_accuracy},
              {"fold_mean", m.fold_mean()},
              {"fold_std", m.fold_std()},
              {"labels", per},
              {"confusion", m.confusion}};
}

}  // namespace faceparse::evalkit
