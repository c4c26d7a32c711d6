#include "faceparse/netkit/network_spec.hpp"

#include "faceparse/error.hpp"

namespace faceparse::netkit {

using nlohmann::json;

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::relu: return "relu";
    case LayerKind::dense: return "dense";
    case LayerKind::softmax_head: return "softmax";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& name) {
  if (name == "conv") return LayerKind::conv;
  if (name == "maxpool") return LayerKind::maxpool;
  if (name == "relu") return LayerKind::relu;
  if (name == "dense") return LayerKind::dense;
  if (name == "softmax") return LayerKind::softmax_head;
  throw ConfigError("unknown layer kind '" + name + "'");
}

ConvGeometry LayerSpec::geometry() const {
  return ConvGeometry{kernel_h, kernel_w, stride_h, stride_w, padding.value_or(Padding{})};
}

LayerSpec LayerSpec::conv(std::string name, std::size_t k, std::size_t s, std::size_t maps,
                          std::optional<std::pair<std::size_t, std::size_t>> declared) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.name = std::move(name);
  l.kernel_h = l.kernel_w = k;
  l.stride_h = l.stride_w = s;
  l.units = maps;
  l.declared_output = declared;
  return l;
}

LayerSpec LayerSpec::maxpool(std::string name, std::size_t k, std::size_t s,
                             std::optional<std::pair<std::size_t, std::size_t>> declared) {
  LayerSpec l;
  l.kind = LayerKind::maxpool;
  l.name = std::move(name);
  l.kernel_h = l.kernel_w = k;
  l.stride_h = l.stride_w = s;
  l.declared_output = declared;
  return l;
}

LayerSpec LayerSpec::relu(std::string name) {
  LayerSpec l;
  l.kind = LayerKind::relu;
  l.name = std::move(name);
  return l;
}

LayerSpec LayerSpec::dense(std::string name, std::size_t units) {
  LayerSpec l;
  l.kind = LayerKind::dense;
  l.name = std::move(name);
  l.units = units;
  return l;
}

LayerSpec LayerSpec::softmax_head() {
  LayerSpec l;
  l.kind = LayerKind::softmax_head;
  l.name = "softmax";
  return l;
}

void NetworkSpec::validate() const {
  if (input_shape.size() != 3) {
    throw ConfigError("network '" + name + "': input shape must be C,H,W, got " + to_string(input_shape));
  }
  for (auto e : input_shape) {
    if (e == 0) throw ConfigError("network '" + name + "': input extents must be >= 1");
  }
  if (class_count < 1) throw ConfigError("network '" + name + "': class_count must be >= 1");
  if (layers.empty() || layers.back().kind != LayerKind::softmax_head) {
    throw ConfigError("network '" + name + "': the last layer must be the softmax head");
  }
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.kind == LayerKind::softmax_head) {
      throw ConfigError("network '" + name + "': exactly one softmax head is allowed, as the last layer");
    }
    if (l.kind == LayerKind::conv || l.kind == LayerKind::maxpool) {
      if (l.kernel_h == 0 || l.kernel_w == 0 || l.stride_h == 0 || l.stride_w == 0) {
        throw ConfigError("layer '" + l.name + "': kernel and stride must be >= 1");
      }
    }
    if ((l.kind == LayerKind::conv || l.kind == LayerKind::dense) && l.units == 0) {
      throw ConfigError("layer '" + l.name + "': feature map / unit count must be >= 1");
    }
  }
}

namespace {

std::optional<std::pair<std::size_t, std::size_t>> search_axis(std::size_t in, std::size_t k,
                                                               std::size_t s, std::size_t declared) {
  for (std::size_t total = 0; total <= 2 * k; ++total) {
    auto out = output_extent(in, k, s, total);
    if (!out || *out != declared) continue;
    for (std::size_t before = 0; before <= total; ++before) {
      if (windows_touch_input(in, k, s, before, total - before)) return std::pair{before, total - before};
    }
  }
  return std::nullopt;
}

Shape spatial_output(const LayerSpec& l, const Shape& in) {
  if (in.size() != 3) {
    throw ShapeError("layer '" + l.name + "' needs a C,H,W input, got " + to_string(in));
  }
  const ConvGeometry g = l.geometry();
  const auto oh = output_extent(in[1], g.kernel_h, g.stride_h, g.pad.top + g.pad.bottom);
  const auto ow = output_extent(in[2], g.kernel_w, g.stride_w, g.pad.left + g.pad.right);
  if (!oh || !ow || *oh == 0 || *ow == 0) {
    throw ShapeError("layer '" + l.name + "' has a non-positive output extent for input " + to_string(in));
  }
  const std::size_t channels = l.kind == LayerKind::conv ? l.units : in[0];
  return Shape{channels, *oh, *ow};
}

}  // namespace

NetworkSpec resolve_padding(const NetworkSpec& spec) {
  spec.validate();
  NetworkSpec out = spec;
  Shape shape = spec.input_shape;
  for (auto& l : out.layers) {
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::maxpool: {
        if (shape.size() != 3) {
          throw ShapeError("layer '" + l.name + "' needs a C,H,W input, got " + to_string(shape));
        }
        if (!l.padding) {
          if (l.declared_output) {
            auto rows = search_axis(shape[1], l.kernel_h, l.stride_h, l.declared_output->first);
            auto cols = search_axis(shape[2], l.kernel_w, l.stride_w, l.declared_output->second);
            if (!rows || !cols) {
              throw ShapeError("layer '" + l.name + "': no padding up to 2k reproduces the declared output " +
                               std::to_string(l.declared_output->first) + "x" +
                               std::to_string(l.declared_output->second) + " from input " + to_string(shape));
            }
            l.padding = Padding{rows->first, rows->second, cols->first, cols->second};
          } else {
            l.padding = Padding{};
          }
        }
        shape = spatial_output(l, shape);
        if (l.declared_output && (shape[1] != l.declared_output->first || shape[2] != l.declared_output->second)) {
          throw ShapeError("layer '" + l.name + "': padding yields " + to_string(shape) +
                           " but the declared output is " + std::to_string(l.declared_output->first) + "x" +
                           std::to_string(l.declared_output->second));
        }
        break;
      }
      case LayerKind::dense:
        shape = Shape{l.units};
        break;
      case LayerKind::relu:
      case LayerKind::softmax_head:
        break;
    }
  }
  return out;
}

std::vector<LayerShape> infer_shapes(const NetworkSpec& spec) {
  spec.validate();
  std::vector<LayerShape> out;
  Shape shape = spec.input_shape;
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::maxpool: {
        if (!l.padding) throw ShapeError("layer '" + l.name + "' has unresolved padding");
        const Shape in = shape;
        shape = spatial_output(l, shape);
        if (l.declared_output && (shape[1] != l.declared_output->first || shape[2] != l.declared_output->second)) {
          throw ShapeError("layer '" + l.name + "' produces " + to_string(shape) +
                           ", not its declared output");
        }
        const Padding& p = *l.padding;
        if (l.kind == LayerKind::maxpool &&
            (!windows_touch_input(in[1], l.kernel_h, l.stride_h, p.top, p.bottom) ||
             !windows_touch_input(in[2], l.kernel_w, l.stride_w, p.left, p.right))) {
          throw ShapeError("layer '" + l.name + "': a pooling window lies entirely inside the padding");
        }
        break;
      }
      case LayerKind::dense:
        shape = Shape{l.units};
        break;
      case LayerKind::relu:
        break;
      case LayerKind::softmax_head:
        if (shape_product(shape) != spec.class_count) {
          throw ShapeError("network '" + spec.name + "': softmax head receives " + to_string(shape) +
                           " values but class_count is " + std::to_string(spec.class_count));
        }
        shape = Shape{spec.class_count};
        break;
    }
    out.push_back({l.name, l.kind, shape});
  }
  return out;
}

void to_json(json& j, const LayerSpec& l) {
  j = json::object();
  j["kind"] = to_string(l.kind);
  if (!l.name.empty()) j["name"] = l.name;
  if (l.kind == LayerKind::conv || l.kind == LayerKind::maxpool) {
    j["kernel"] = {l.kernel_h, l.kernel_w};
    j["stride"] = {l.stride_h, l.stride_w};
    if (l.padding) {
      j["padding"] = {l.padding->top, l.padding->bottom, l.padding->left, l.padding->right};
    } else {
      j["padding"] = nullptr;
    }
    if (l.declared_output) j["output"] = {l.declared_output->first, l.declared_output->second};
  }
  if (l.kind == LayerKind::conv) j["maps"] = l.units;
  if (l.kind == LayerKind::dense) j["units"] = l.units;
}

void from_json(const json& j, LayerSpec& l) {
  l = LayerSpec{};
  l.kind = layer_kind_from_string(j.at("kind").get<std::string>());
  l.name = j.value("name", std::string{});
  if (l.kind == LayerKind::conv || l.kind == LayerKind::maxpool) {
    const auto& k = j.at("kernel");
    const auto& s = j.at("stride");
    l.kernel_h = k.at(0).get<std::size_t>();
    l.kernel_w = k.at(1).get<std::size_t>();
    l.stride_h = s.at(0).get<std::size_t>();
    l.stride_w = s.at(1).get<std::size_t>();
    if (j.contains("padding") && !j["padding"].is_null()) {
      const auto& p = j["padding"];
      l.padding = Padding{p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>(), p.at(2).get<std::size_t>(),
                          p.at(3).get<std::size_t>()};
    }
    if (j.contains("output")) {
      l.declared_output = std::pair{j["output"].at(0).get<std::size_t>(), j["output"].at(1).get<std::size_t>()};
    }
  }
  if (l.kind == LayerKind::conv) l.units = j.at("maps").get<std::size_t>();
  if (l.kind == LayerKind::dense) l.units = j.at("units").get<std::size_t>();
  if (l.kind == LayerKind::softmax_head && l.name.empty()) l.name = "softmax";
}

void to_json(json& j, const NetworkSpec& s) {
  j = json{{"name", s.name}, {"input", s.input_shape}, {"classes", s.class_count}, {"layers", s.layers}};
}

void from_json(const json& j, NetworkSpec& s) {
  s.name = j.value("name", std::string{});
  s.input_shape = j.at("input").get<Shape>();
  s.class_count = j.at("classes").get<std::size_t>();
  s.layers = j.at("layers").get<std::vector<LayerSpec>>();
  s.validate();
}

NetworkSpec paper_network(std::size_t input_channels, std::size_t class_count, std::size_t input_size) {
  using P = std::pair<std::size_t, std::size_t>;
  NetworkSpec s;
  s.name = "paper";
  s.input_shape = {input_channels, input_size, input_size};
  s.class_count = class_count;
  s.layers = {
      LayerSpec::conv("CL-1", 5, 2, 96, P{124, 124}),  LayerSpec::relu("relu-1"),
      LayerSpec::maxpool("PL-1", 3, 2, P{62, 62}),
      LayerSpec::conv("CL-2", 5, 2, 256, P{30, 30}),   LayerSpec::relu("relu-2"),
      LayerSpec::maxpool("PL-2", 3, 2, P{15, 15}),
      LayerSpec::conv("CL-3", 5, 1, 316, P{12, 12}),   LayerSpec::relu("relu-3"),
      LayerSpec::maxpool("PL-3", 3, 2, P{6, 6}),
      LayerSpec::conv("CL-4", 5, 2, 512, P{4, 4}),     LayerSpec::relu("relu-4"),
      LayerSpec::maxpool("PL-4", 3, 2, P{2, 2}),
      LayerSpec::dense("FC-1", 1024),                  LayerSpec::relu("relu-5"),
      LayerSpec::dense("FC-2", class_count),           LayerSpec::softmax_head(),
  };
  return resolve_padding(s);
}

namespace {

NetworkSpec toy_family(std::string name, Shape input, std::size_t class_count) {
  NetworkSpec s;
  s.name = std::move(name);
  s.input_shape = std::move(input);
  s.class_count = class_count;
  s.layers = {
      LayerSpec::conv("CL-1", 5, 2, 16),  LayerSpec::relu("relu-1"), LayerSpec::maxpool("PL-1", 3, 2),
      LayerSpec::conv("CL-2", 3, 1, 32),  LayerSpec::relu("relu-2"), LayerSpec::maxpool("PL-2", 3, 2),
      LayerSpec::dense("FC-1", 64),       LayerSpec::relu("relu-3"),
      LayerSpec::dense("FC-2", class_count), LayerSpec::softmax_head(),
  };
  return resolve_padding(s);
}

}  // namespace

NetworkSpec toy_segmentation_network() { return toy_family("toy-seg", {3, 33, 33}, 7); }

NetworkSpec toy_attribute_network(std::size_t input_channels, std::size_t class_count) {
  return toy_family("toy-attr", {input_channels, 32, 32}, class_count);
}

}  // namespace faceparse::netkit
