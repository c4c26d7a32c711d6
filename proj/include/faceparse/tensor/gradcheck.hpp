#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "faceparse/tensor/tensor.hpp"

namespace faceparse {

/// A differentiable scalar function of some named tensors, plus its
/// analytic gradient. The checker perturbs the tensors in place.
struct GradCheckTarget {
  struct Block {
    std::string name;
    Tensor* value = nullptr;
  };
  std::vector<Block> blocks;
  std::function<double()> loss;
  /// One gradient per block, same shapes, evaluated at the current values.
  std::function<std::vector<Tensor>()> analytic;
  /// Optional signature of the piecewise-linear regime (ReLU signs, pooling
  /// winners). A coordinate whose +-h probes change the signature straddles a
  /// kink and is skipped rather than compared. Always invoked right after
  /// loss() at the same point, so it may return a value cached by that call.
  std::function<std::uint64_t()> activation_pattern;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, so that gradients near zero are
  /// compared on an absolute scale.
  double denominator_floor = 1e-6;
  /// 0 checks every coordinate; otherwise a seeded sample of this many.
  std::size_t max_coords_per_block = 0;
  std::uint64_t seed = 0;
};

struct BlockReport {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

struct GradCheckReport {
  std::vector<BlockReport> blocks;
  double tolerance = 0.0;

  bool passed() const;
  double max_error() const;
  std::vector<std::string> failing_blocks() const;
};

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

/// Compares analytic gradients with central differences. Never throws on a
/// mismatch: a failing check is reported, not raised.
GradCheckReport gradient_check(GradCheckTarget& target, const GradCheckOptions& options = {});

}  // namespace faceparse
