#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "faceparse/netkit/network_spec.hpp"
#include "faceparse/tensor/gradcheck.hpp"
#include "faceparse/tensor/tensor.hpp"

namespace faceparse::netkit {

struct ParamBlock {
  std::string name;
  Tensor value;

  friend bool operator==(const ParamBlock&, const ParamBlock&) = default;
};

/// Trainable tensors in layer order: "<layer>.weight" then "<layer>.bias"
/// for every conv and dense layer.
struct ParamSet {
  std::vector<ParamBlock> blocks;

  std::size_t size() const { return blocks.size(); }
  const ParamBlock* find(const std::string& name) const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

/// Activations kept by forward() for the backward pass.
struct ForwardTrace {
  /// inputs[i] is the input of layer i; the last entry holds the logits.
  std::vector<Tensor> inputs;
  /// Pooling winners per layer (empty for other kinds).
  std::vector<std::vector<std::size_t>> argmax;
  /// Which inputs feed a ReLU; only their signs enter the pattern.
  std::vector<bool> feeds_relu;

  /// Signature of ReLU signs and pooling winners, for kink detection.
  std::uint64_t activation_pattern() const;
};

/// A validated, shape-inferred network. Holds no parameters.
class Network {
 public:
  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<LayerShape>& shapes() const { return shapes_; }
  std::size_t class_count() const { return spec_.class_count; }
  const Shape& input_shape() const { return spec_.input_shape; }

  /// Names and shapes of the parameter blocks.
  std::vector<std::pair<std::string, Shape>> parameter_layout() const;

  /// Weights ~ U(-b, b) with b = sqrt(6 / fan_in), biases zero. Blocks are
  /// filled in layout order from a single Rng(seed) stream.
  ParamSet init_parameters(std::uint64_t seed) const;
  ParamSet zero_parameters() const;

  /// Throws CompatibilityError unless params matches parameter_layout().
  void check_parameters(const ParamSet& params) const;

  /// Logits for one C,H,W input.
  Tensor forward(const ParamSet& params, const Tensor& input, ForwardTrace* trace = nullptr) const;

  /// Gradients of a loss w.r.t. every parameter block, given d(loss)/d(logits).
  ParamSet backward(const ParamSet& params, const ForwardTrace& trace, const Tensor& grad_logits,
                    Tensor* grad_input = nullptr) const;

  /// Softmax probabilities.
  Tensor predict(const ParamSet& params, const Tensor& input) const;

 private:
  NetworkSpec spec_;
  std::vector<LayerShape> shapes_;
  /// Index of the first parameter block of each layer, or npos.
  std::vector<std::size_t> block_of_layer_;
};

/// Finite-difference target over every parameter block plus the input, with
/// softmax cross-entropy against true_class as the loss. The referenced
/// objects must outlive the target.
GradCheckTarget make_gradcheck_target(const Network& net, ParamSet& params, Tensor& input,
                                      std::size_t true_class);

}  // namespace faceparse::netkit
