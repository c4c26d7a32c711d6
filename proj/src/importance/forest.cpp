#include "faceparse/importance/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "faceparse/error.hpp"
#include "faceparse/tensor/rng.hpp"

namespace faceparse::importance {

using nlohmann::json;

SummaryFeatures extract_summary(const faceseg::ProbabilityMaps& pms, std::size_t label) {
  SummaryFeatures s;
  s.label = label;
  const std::size_t n = pms.width * pms.height;
  const double inv = 1.0 / static_cast<double>(n);
  const auto hist = faceseg::argmax_mask(pms).histogram();
  for (std::size_t c = 0; c < kClassCount; ++c) {
    const auto plane = pms.plane(c);
    double sum = 0.0;
    for (double v : plane) sum += v;
    const double mean = sum * inv;
    double sq = 0.0;
    for (double v : plane) sq += (v - mean) * (v - mean);
    s.values[3 * c] = mean;
    s.values[3 * c + 1] = std::sqrt(sq * inv);
    s.values[3 * c + 2] = static_cast<double>(hist[c]) * inv;
  }
  return s;
}

std::vector<std::string> summary_feature_names() {
  std::vector<std::string> names;
  for (const auto& e : kPalette) {
    for (const char* stat : {".mean", ".std", ".area"}) names.push_back(std::string(e.name) + stat);
  }
  return names;
}

void ForestConfig::validate() const {
  if (trees < 1) throw ConfigError("forest: tree count must be >= 1");
  if (max_depth < 1) throw ConfigError("forest: max depth must be >= 1");
  if (min_samples_leaf < 1) throw ConfigError("forest: min samples per leaf must be >= 1");
}

void to_json(json& j, const ForestConfig& c) {
  j = json{{"trees", c.trees},
           {"max_depth", c.max_depth},
           {"min_samples_leaf", c.min_samples_leaf},
           {"features_per_split", c.features_per_split},
           {"bootstrap", c.bootstrap},
           {"seed", c.seed}};
}

void from_json(const json& j, ForestConfig& c) {
  const ForestConfig d;
  c.trees = j.value("trees", d.trees);
  c.max_depth = j.value("max_depth", d.max_depth);
  c.min_samples_leaf = j.value("min_samples_leaf", d.min_samples_leaf);
  c.features_per_split = j.value("features_per_split", d.features_per_split);
  c.bootstrap = j.value("bootstrap", d.bootstrap);
  c.seed = j.value("seed", d.seed);
  c.validate();
}

Dataset summary_dataset(std::span<const SummaryFeatures> items, std::size_t class_count) {
  Dataset d;
  d.class_count = class_count;
  for (const auto& s : items) {
    d.rows.emplace_back(s.values.begin(), s.values.end());
    d.labels.push_back(s.label);
  }
  return d;
}

namespace {

// n * Gini impurity of a class histogram holding n samples.
double weighted_gini(const std::vector<double>& counts, double n) {
  if (n <= 0.0) return 0.0;
  double sq = 0.0;
  for (double c : counts) sq += c * c;
  return n - sq / n;
}

struct Split {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double decrease = -1.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, const ForestConfig& cfg, std::size_t mtry, Rng& rng)
      : data_(data), cfg_(cfg), mtry_(mtry), rng_(rng) {}

  Tree build(std::vector<std::size_t> samples) {
    tree_.impurity_drop.assign(data_.features(), 0.0);
    grow(std::move(samples), 0);
    return std::move(tree_);
  }

 private:
  std::size_t grow(std::vector<std::size_t> samples, std::size_t depth) {
    const std::size_t id = tree_.nodes.size();
    tree_.nodes.emplace_back();
    std::vector<double> counts(data_.class_count, 0.0);
    for (auto i : samples) counts[data_.labels[i]] += 1.0;
    const double n = static_cast<double>(samples.size());
    const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0.0; }) <= 1;

    Split best;
    if (!pure && depth < cfg_.max_depth && samples.size() >= 2 * cfg_.min_samples_leaf) {
      best = find_split(samples, counts, n);
    }
    if (!best.found) {
      TreeNode& leaf = tree_.nodes[id];
      leaf.class_share.resize(counts.size());
      for (std::size_t c = 0; c < counts.size(); ++c) leaf.class_share[c] = counts[c] / n;
      return id;
    }
    tree_.impurity_drop[best.feature] += best.decrease;
    std::vector<std::size_t> left, right;
    for (auto i : samples) (data_.rows[i][best.feature] <= best.threshold ? left : right).push_back(i);
    samples.clear();
    samples.shrink_to_fit();
    const std::size_t l = grow(std::move(left), depth + 1);
    const std::size_t r = grow(std::move(right), depth + 1);
    TreeNode& node = tree_.nodes[id];
    node.leaf = false;
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  Split find_split(const std::vector<std::size_t>& samples, const std::vector<double>& counts, double n) {
    const std::size_t d = data_.features();
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng_.shuffle(std::span(order));
    const double parent = weighted_gini(counts, n);

    Split best;
    std::vector<std::size_t> sorted = samples;
    for (std::size_t tried = 0; tried < d; ++tried) {
      if (tried >= mtry_ && best.found) break;
      const std::size_t f = order[tried];
      std::stable_sort(sorted.begin(), sorted.end(),
                       [&](std::size_t a, std::size_t b) { return data_.rows[a][f] < data_.rows[b][f]; });
      std::vector<double> left(counts.size(), 0.0);
      std::vector<double> right = counts;
      for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
        const std::size_t lab = data_.labels[sorted[k]];
        left[lab] += 1.0;
        right[lab] -= 1.0;
        const double a = data_.rows[sorted[k]][f], b = data_.rows[sorted[k + 1]][f];
        if (!(a < b)) continue;
        const std::size_t nl = k + 1, nr = sorted.size() - nl;
        if (nl < cfg_.min_samples_leaf || nr < cfg_.min_samples_leaf) continue;
        const double decrease = parent - weighted_gini(left, static_cast<double>(nl)) -
                                weighted_gini(right, static_cast<double>(nr));
        if (!best.found || decrease > best.decrease) {
          double t = a + (b - a) / 2.0;
          if (!(t < b)) t = a;
          best = {true, f, t, std::max(decrease, 0.0)};
        }
      }
    }
    return best;
  }

  const Dataset& data_;
  const ForestConfig& cfg_;
  std::size_t mtry_;
  Rng& rng_;
  Tree tree_;
};

const TreeNode& leaf_for(const Tree& t, std::span<const double> row) {
  std::size_t i = 0;
  while (!t.nodes[i].leaf) i = row[t.nodes[i].feature] <= t.nodes[i].threshold ? t.nodes[i].left : t.nodes[i].right;
  return t.nodes[i];
}

std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

std::vector<double> Forest::predict_proba(std::span<const double> row) const {
  if (row.size() != features) {
    throw ShapeError("forest: row has " + std::to_string(row.size()) + " features, expected " +
                     std::to_string(features));
  }
  std::vector<double> p(class_count, 0.0);
  for (const auto& t : trees) {
    const auto& share = leaf_for(t, row).class_share;
    for (std::size_t c = 0; c < class_count; ++c) p[c] += share[c];
  }
  for (auto& v : p) v /= static_cast<double>(trees.size());
  return p;
}

std::size_t Forest::predict(std::span<const double> row) const { return argmax(predict_proba(row)); }

Forest train_forest(const Dataset& data, const ForestConfig& config) {
  config.validate();
  if (data.rows.empty()) throw DataError("train_forest: empty dataset");
  if (data.class_count < 1) throw DataError("train_forest: class count must be >= 1");
  const std::size_t d = data.features();
  if (d == 0) throw DataError("train_forest: rows have no features");
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    if (data.rows[i].size() != d) throw ShapeError("train_forest: row " + std::to_string(i) + " has a different width");
    if (data.labels[i] >= data.class_count) {
      throw DataError("train_forest: row " + std::to_string(i) + " has label " + std::to_string(data.labels[i]) +
                      " outside [0, " + std::to_string(data.class_count) + ")");
    }
  }
  const std::size_t mtry = config.features_per_split
                               ? std::min(config.features_per_split, d)
                               : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
  const std::size_t n = data.rows.size();
  Forest forest;
  forest.config = config;
  forest.features = d;
  forest.class_count = data.class_count;
  for (std::size_t t = 0; t < config.trees; ++t) {
    Rng rng(derive_seed(config.seed, t));
    std::vector<std::size_t> samples(n);
    std::vector<std::size_t> in_bag(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
      samples[k] = config.bootstrap ? static_cast<std::size_t>(rng.below(n)) : k;
      ++in_bag[samples[k]];
    }
    std::sort(samples.begin(), samples.end());
    Tree tree = TreeBuilder(data, config, mtry, rng).build(std::move(samples));
    tree.in_bag = std::move(in_bag);
    forest.trees.push_back(std::move(tree));
  }

  std::size_t scored = 0, correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> p(data.class_count, 0.0);
    bool any = false;
    for (const auto& t : forest.trees) {
      if (t.in_bag[i]) continue;
      any = true;
      const auto& share = leaf_for(t, data.rows[i]).class_share;
      for (std::size_t c = 0; c < p.size(); ++c) p[c] += share[c];
    }
    if (!any) continue;
    ++scored;
    correct += argmax(p) == data.labels[i];
  }
  if (scored) forest.oob_accuracy = static_cast<double>(correct) / static_cast<double>(scored);
  return forest;
}

ImportanceReport importance_report(const Forest& forest, std::vector<std::string> feature_names) {
  ImportanceReport r;
  if (feature_names.empty()) {
    if (forest.features == kSummaryWidth) {
      feature_names = summary_feature_names();
    } else {
      for (std::size_t f = 0; f < forest.features; ++f) feature_names.push_back("f" + std::to_string(f));
    }
  }
  if (feature_names.size() != forest.features) throw ShapeError("importance_report: feature name count mismatch");
  r.feature_names = std::move(feature_names);
  r.feature_scores.assign(forest.features, 0.0);
  for (const auto& t : forest.trees) {
    const double total = std::accumulate(t.impurity_drop.begin(), t.impurity_drop.end(), 0.0);
    if (total <= 0.0) continue;
    for (std::size_t f = 0; f < forest.features; ++f) r.feature_scores[f] += t.impurity_drop[f] / total;
  }
  const double sum = std::accumulate(r.feature_scores.begin(), r.feature_scores.end(), 0.0);
  if (sum > 0.0) {
    for (auto& s : r.feature_scores) s /= sum;
  } else {
    r.uninformative = true;
  }
  if (forest.features == kSummaryWidth) {
    std::array<double, kClassCount> cls{};
    for (std::size_t c = 0; c < kClassCount; ++c) {
      cls[c] = r.feature_scores[3 * c] + r.feature_scores[3 * c + 1] + r.feature_scores[3 * c + 2];
    }
    r.class_scores = cls;
    r.class_ranking.resize(kClassCount);
    std::iota(r.class_ranking.begin(), r.class_ranking.end(), std::size_t{0});
    std::stable_sort(r.class_ranking.begin(), r.class_ranking.end(),
                     [&](std::size_t a, std::size_t b) { return cls[a] > cls[b]; });
  }
  return r;
}

std::vector<double> permutation_importance(const Forest& forest, const Dataset& data, std::uint64_t seed,
                                           std::size_t repeats) {
  if (repeats < 1) throw ConfigError("permutation_importance: repeats must be >= 1");
  auto accuracy = [&](const std::vector<std::vector<double>>& rows) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) ok += forest.predict(rows[i]) == data.labels[i];
    return static_cast<double>(ok) / static_cast<double>(rows.size());
  };
  const double base = accuracy(data.rows);
  std::vector<double> out(forest.features, 0.0);
  for (std::size_t f = 0; f < forest.features; ++f) {
    for (std::size_t r = 0; r < repeats; ++r) {
      Rng rng(derive_seed(seed, f, r));
      std::vector<double> column;
      for (const auto& row : data.rows) column.push_back(row[f]);
      rng.shuffle(std::span(column));
      auto rows = data.rows;
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i][f] = column[i];
      out[f] += base - accuracy(rows);
    }
    out[f] /= static_cast<double>(repeats);
  }
  return out;
}

json report_to_json(const ImportanceReport& r) {
  json j{{"method", "mean_decrease_gini"}, {"uninformative", r.uninformative}, {"features", json::array()}};
  for (std::size_t f = 0; f < r.feature_scores.size(); ++f) {
    json e{{"name", r.feature_names[f]}, {"score", r.feature_scores[f]}};
    if (r.permutation_scores) e["permutation"] = (*r.permutation_scores)[f];
    j["features"].push_back(e);
  }
  if (r.class_scores) {
    j["classes"] = json::array();
    for (std::size_t c = 0; c < kClassCount; ++c) {
      j["classes"].push_back({{"class", kPalette[c].name}, {"score", (*r.class_scores)[c]}});
    }
    j["ranking"] = json::array();
    for (auto c : r.class_ranking) j["ranking"].push_back(kPalette[c].name);
  }
  return j;
}

std::vector<std::uint8_t> render_importance_chart(const ImportanceReport& r, std::size_t& width, std::size_t& height) {
  constexpr std::size_t kBar = 40, kHeight = 200, kMargin = 10;
  width = kBar * kClassCount;
  height = kHeight;
  std::vector<std::uint8_t> px(width * height * 3, 255);
  if (!r.class_scores) return px;
  const double top = *std::max_element(r.class_scores->begin(), r.class_scores->end());
  for (std::size_t c = 0; c < kClassCount; ++c) {
    const double frac = top > 0.0 ? (*r.class_scores)[c] / top : 0.0;
    const auto bar = static_cast<std::size_t>(std::lround(frac * static_cast<double>(kHeight - 2 * kMargin)));
    auto color = kPalette[c].color;
    if (c == kBack) color = {96, 96, 96};  // black would vanish against the axis
    for (std::size_t y = kHeight - kMargin - bar; y < kHeight - kMargin; ++y)
      for (std::size_t x = c * kBar + 6; x < (c + 1) * kBar - 6; ++x)
        for (std::size_t ch = 0; ch < 3; ++ch) px[(y * width + x) * 3 + ch] = color[ch];
  }
  for (std::size_t x = 0; x < width; ++x)
    for (std::size_t ch = 0; ch < 3; ++ch) px[((kHeight - kMargin) * width + x) * 3 + ch] = 0;
  return px;
}

}  // namespace faceparse::importance
