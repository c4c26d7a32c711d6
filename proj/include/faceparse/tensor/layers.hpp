#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "faceparse/tensor/tensor.hpp"

namespace faceparse {

struct Padding {
  std::size_t top = 0;
  std::size_t bottom = 0;
  std::size_t left = 0;
  std::size_t right = 0;

  friend bool operator==(const Padding&, const Padding&) = default;
};

/// Window geometry shared by convolution and max pooling.
struct ConvGeometry {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  Padding pad;

  /// Output extents for an input of the given size. Throws ShapeError when
  /// the geometry is invalid or an output extent would be < 1.
  std::size_t out_h(std::size_t in_h) const;
  std::size_t out_w(std::size_t in_w) const;

  friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;
};

/// floor((in + pad_total - kernel) / stride) + 1, or nullopt when the padded
/// input is shorter than the kernel.
std::optional<std::size_t> output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                         std::size_t pad_total);

/// True when every window along one axis overlaps at least one real input cell.
bool windows_touch_input(std::size_t in, std::size_t kernel, std::size_t stride,
                         std::size_t pad_before, std::size_t pad_after);

// Convolution ---------------------------------------------------------------

/// input [C,H,W], weights [F,C,kh,kw], bias [F] -> [F,H',W']. The padding
/// region is zero. Each output accumulates bias first, then the products in
/// (channel, ky, kx) order.
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const ConvGeometry& geom);

struct ConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

/// With want_input_grad false the input gradient is left empty.
ConvGrads conv2d_backward(const Tensor& input, const Tensor& weights, const ConvGeometry& geom,
                          const Tensor& upstream, bool want_input_grad = true);

// Max pooling ---------------------------------------------------------------

struct PoolResult {
  Tensor output;
  /// Flat index into the input of the winning element, one per output.
  std::vector<std::size_t> argmax;
};

/// Padded cells act as -infinity. A window lying entirely in the padding is
/// rejected. Ties go to the lowest flat input index.
PoolResult maxpool_forward(const Tensor& input, const ConvGeometry& geom);

Tensor maxpool_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                        const Tensor& upstream);

// ReLU ----------------------------------------------------------------------

Tensor relu_forward(const Tensor& input);
/// Passes upstream where input > 0; the subgradient at exactly 0 is 0.
Tensor relu_backward(const Tensor& input, const Tensor& upstream);

// Dense ---------------------------------------------------------------------

/// input with n elements (any shape), weights [m,n], bias [m] -> [m].
Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
  Tensor input;  // same shape as the forward input
  Tensor weights;
  Tensor bias;
};

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream);

// Softmax -------------------------------------------------------------------

/// Max-subtracted softmax over all elements of logits, returned as [k].
Tensor softmax(const Tensor& logits);

struct SoftmaxLoss {
  double loss = 0.0;
  Tensor probs;
  Tensor grad_logits;
};

SoftmaxLoss softmax_cross_entropy(const Tensor& logits, std::size_t true_class);

}  // namespace faceparse
