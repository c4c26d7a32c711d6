#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "faceparse/tensor/layers.hpp"
#include "faceparse/tensor/tensor.hpp"

namespace faceparse::netkit {

using faceparse::to_string;

enum class LayerKind { conv, maxpool, relu, dense, softmax_head };

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

/// One row of a network description. conv/maxpool use kernel, stride and
/// padding; conv and dense use units (feature maps / output width).
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride_h = 1, stride_w = 1;
  /// nullopt until resolve_padding has run.
  std::optional<Padding> padding;
  std::size_t units = 0;
  /// Declared spatial output (H, W); padding is resolved to reach it.
  std::optional<std::pair<std::size_t, std::size_t>> declared_output;

  ConvGeometry geometry() const;

  static LayerSpec conv(std::string name, std::size_t k, std::size_t s, std::size_t maps,
                        std::optional<std::pair<std::size_t, std::size_t>> declared = {});
  static LayerSpec maxpool(std::string name, std::size_t k, std::size_t s,
                           std::optional<std::pair<std::size_t, std::size_t>> declared = {});
  static LayerSpec relu(std::string name = {});
  static LayerSpec dense(std::string name, std::size_t units);
  static LayerSpec softmax_head();

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
  std::string name;
  Shape input_shape;  // C, H, W
  std::vector<LayerSpec> layers;
  std::size_t class_count = 0;

  /// Structural checks that do not need shapes: input rank, a single
  /// trailing softmax head, layer fields present for their kinds.
  void validate() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct LayerShape {
  std::string name;
  LayerKind kind;
  Shape output;
};

/// Fills every unresolved conv/maxpool padding. With a declared output the
/// search runs over total padding 0, 1, ..., 2k and, within a total, over
/// top (left) = 0, 1, ...; the first candidate that reproduces the declared
/// extent and keeps every window overlapping real input wins. Layers without
/// a declaration get zero padding. Already-resolved paddings are kept and
/// checked against the declaration. Idempotent.
NetworkSpec resolve_padding(const NetworkSpec& spec);

/// Output shape of every layer. Requires resolved padding.
std::vector<LayerShape> infer_shapes(const NetworkSpec& spec);

void to_json(nlohmann::json& j, const LayerSpec& l);
void from_json(const nlohmann::json& j, LayerSpec& l);
void to_json(nlohmann::json& j, const NetworkSpec& s);
void from_json(const nlohmann::json& j, NetworkSpec& s);

/// The reference face parsing network: 250x250 RGB input, four conv/pool
/// pairs, two fully connected layers. Other input sizes keep the declared
/// output sizes and re-resolve padding (249 gives an odd patch).
NetworkSpec paper_network(std::size_t input_channels = 3, std::size_t class_count = 7, std::size_t input_size = 250);

/// Small segmentation network for tests: 33x33 RGB patches, two conv/pool
/// pairs with 16/32 maps, dense 64.
NetworkSpec toy_segmentation_network();

/// Same family on a 32x32 input with the given channel and class counts.
NetworkSpec toy_attribute_network(std::size_t input_channels, std::size_t class_count);

}  // namespace faceparse::netkit
