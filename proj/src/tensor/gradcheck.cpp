#include "faceparse/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "faceparse/error.hpp"
#include "faceparse/tensor/rng.hpp"

namespace faceparse {

bool GradCheckReport::passed() const {
  return std::all_of(blocks.begin(), blocks.end(),
                     [&](const BlockReport& b) { return b.max_rel_error <= tolerance; });
}

double GradCheckReport::max_error() const {
  double m = 0.0;
  for (const auto& b : blocks) m = std::max(m, b.max_rel_error);
  return m;
}

std::vector<std::string> GradCheckReport::failing_blocks() const {
  std::vector<std::string> out;
  for (const auto& b : blocks) {
    if (!(b.max_rel_error <= tolerance)) out.push_back(b.name);
  }
  return out;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport gradient_check(GradCheckTarget& target, const GradCheckOptions& options) {
  if (!target.loss || !target.analytic) throw ConfigError("gradient_check: target is incomplete");
  GradCheckReport report;
  report.tolerance = options.tolerance;

  const std::vector<Tensor> analytic = target.analytic();
  if (analytic.size() != target.blocks.size()) {
    throw ShapeError("gradient_check: analytic gradient count does not match block count");
  }
  const bool track_kinks = static_cast<bool>(target.activation_pattern);
  std::uint64_t base_pattern = 0;
  if (track_kinks) {
    target.loss();
    base_pattern = target.activation_pattern();
  }
  Rng rng(options.seed);

  for (std::size_t b = 0; b < target.blocks.size(); ++b) {
    auto& block = target.blocks[b];
    Tensor& value = *block.value;
    require_same_shape(value, analytic[b], "gradient_check");

    std::vector<std::size_t> coords(value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_block != 0 && coords.size() > options.max_coords_per_block) {
      rng.shuffle(std::span(coords));
      coords.resize(options.max_coords_per_block);
      std::sort(coords.begin(), coords.end());
    }

    BlockReport br{block.name, 0.0, 0, 0};
    for (auto idx : coords) {
      const double saved = value[idx];
      value[idx] = saved + options.step;
      const double plus = target.loss();
      const bool kink_plus = track_kinks && target.activation_pattern() != base_pattern;
      value[idx] = saved - options.step;
      const double minus = target.loss();
      const bool kink_minus = track_kinks && target.activation_pattern() != base_pattern;
      value[idx] = saved;
      if (kink_plus || kink_minus) {
        ++br.skipped_kinks;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double err = relative_error(analytic[b][idx], numeric, options.denominator_floor);
      // NaN must fail the block, so compare with the negated form.
      if (!(err <= br.max_rel_error)) br.max_rel_error = std::isnan(err) ? HUGE_VAL : err;
      ++br.checked;
    }
    report.blocks.push_back(br);
  }
  return report;
}

}  // namespace faceparse
