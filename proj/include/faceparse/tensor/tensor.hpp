#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace faceparse {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_product(const Shape& shape);

/// Dense row-major tensor of 64-bit values. Images use C x H x W order.
///
/// A default-constructed tensor is the empty tensor (rank 0, no data); every
/// other tensor has all extents >= 1 and product(shape) == size().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t flat) noexcept { return data_[flat]; }
  double operator[](std::size_t flat) const noexcept { return data_[flat]; }

  /// Bounds-checked multi-index access; throws ShapeError when out of range.
  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;
  std::size_t flat_index(std::initializer_list<std::size_t> index) const;

  /// Same data viewed with a different shape of equal product.
  Tensor reshaped(Shape shape) const;

  void fill(double value);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Throws ShapeError naming both shapes unless they are equal.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace faceparse
