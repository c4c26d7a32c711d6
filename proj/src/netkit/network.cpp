#include "faceparse/netkit/network.hpp"

#include <cmath>
#include <memory>

#include "faceparse/error.hpp"
#include "faceparse/tensor/checksum.hpp"
#include "faceparse/tensor/layers.hpp"
#include "faceparse/tensor/rng.hpp"

namespace faceparse::netkit {

namespace {
constexpr std::size_t npos = static_cast<std::size_t>(-1);
}

const ParamBlock* ParamSet::find(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

std::uint64_t ForwardTrace::activation_pattern() const {
  Fnv1a64 h;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (i >= feeds_relu.size() || !feeds_relu[i]) continue;
    for (double v : inputs[i].data()) {
      const std::byte bit{static_cast<unsigned char>(v > 0.0)};
      h.update(std::span(&bit, 1));
    }
  }
  for (const auto& a : argmax) h.update(std::as_bytes(std::span(a)));
  return h.digest();
}

Network::Network(NetworkSpec spec) : spec_(resolve_padding(spec)) {
  shapes_ = infer_shapes(spec_);
  std::size_t next = 0;
  for (const auto& l : spec_.layers) {
    if (l.kind == LayerKind::conv || l.kind == LayerKind::dense) {
      block_of_layer_.push_back(next);
      next += 2;
    } else {
      block_of_layer_.push_back(npos);
    }
  }
}

std::vector<std::pair<std::string, Shape>> Network::parameter_layout() const {
  std::vector<std::pair<std::string, Shape>> out;
  Shape in = spec_.input_shape;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    if (l.kind == LayerKind::conv) {
      out.emplace_back(l.name + ".weight", Shape{l.units, in[0], l.kernel_h, l.kernel_w});
      out.emplace_back(l.name + ".bias", Shape{l.units});
    } else if (l.kind == LayerKind::dense) {
      out.emplace_back(l.name + ".weight", Shape{l.units, shape_product(in)});
      out.emplace_back(l.name + ".bias", Shape{l.units});
    }
    in = shapes_[i].output;
  }
  return out;
}

ParamSet Network::zero_parameters() const {
  ParamSet p;
  for (auto& [name, shape] : parameter_layout()) p.blocks.push_back({name, Tensor(shape)});
  return p;
}

ParamSet Network::init_parameters(std::uint64_t seed) const {
  ParamSet p = zero_parameters();
  Rng rng(seed);
  for (auto& b : p.blocks) {
    if (b.value.rank() == 1) continue;  // bias
    const std::size_t fan_in = b.value.size() / b.value.extent(0);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : b.value.data()) v = rng.uniform(-bound, bound);
  }
  return p;
}

void Network::check_parameters(const ParamSet& params) const {
  const auto layout = parameter_layout();
  if (params.blocks.size() != layout.size()) {
    throw CompatibilityError("network '" + spec_.name + "' expects " + std::to_string(layout.size()) +
                             " parameter blocks, got " + std::to_string(params.blocks.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& b = params.blocks[i];
    if (b.name != layout[i].first || b.value.shape() != layout[i].second) {
      throw CompatibilityError("parameter block " + std::to_string(i) + " is '" + b.name + "' " +
                               to_string(b.value.shape()) + ", expected '" + layout[i].first + "' " +
                               to_string(layout[i].second));
    }
  }
}

Tensor Network::forward(const ParamSet& params, const Tensor& input, ForwardTrace* trace) const {
  if (input.shape() != spec_.input_shape) {
    throw ShapeError("network '" + spec_.name + "' expects input " + to_string(spec_.input_shape) +
                     ", got " + to_string(input.shape()));
  }
  if (trace) {
    trace->inputs.clear();
    trace->argmax.assign(spec_.layers.size(), {});
    trace->feeds_relu.clear();
  }
  Tensor x = input;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    if (l.kind == LayerKind::softmax_head) break;
    if (trace) {
      trace->inputs.push_back(x);
      trace->feeds_relu.push_back(l.kind == LayerKind::relu);
    }
    switch (l.kind) {
      case LayerKind::conv: {
        const auto bi = block_of_layer_[i];
        x = conv2d_forward(x, params.blocks[bi].value, params.blocks[bi + 1].value, l.geometry());
        break;
      }
      case LayerKind::maxpool: {
        auto r = maxpool_forward(x, l.geometry());
        if (trace) trace->argmax[i] = std::move(r.argmax);
        x = std::move(r.output);
        break;
      }
      case LayerKind::relu:
        x = relu_forward(x);
        break;
      case LayerKind::dense: {
        const auto bi = block_of_layer_[i];
        x = dense_forward(x, params.blocks[bi].value, params.blocks[bi + 1].value);
        break;
      }
      case LayerKind::softmax_head:
        break;
    }
  }
  if (trace) trace->inputs.push_back(x);
  return x;
}

ParamSet Network::backward(const ParamSet& params, const ForwardTrace& trace, const Tensor& grad_logits,
                           Tensor* grad_input) const {
  const std::size_t n = spec_.layers.size() - 1;  // excluding the head
  if (trace.inputs.size() != n + 1) throw ShapeError("backward: trace does not belong to this network");
  if (grad_logits.size() != spec_.class_count) {
    throw ShapeError("backward: grad_logits " + to_string(grad_logits.shape()) + " does not match " +
                     std::to_string(spec_.class_count) + " classes");
  }
  ParamSet grads = zero_parameters();
  Tensor g = grad_logits.reshaped(trace.inputs[n].shape());
  for (std::size_t i = n; i-- > 0;) {
    const auto& l = spec_.layers[i];
    const Tensor& in = trace.inputs[i];
    switch (l.kind) {
      case LayerKind::conv: {
        const auto bi = block_of_layer_[i];
        auto cg = conv2d_backward(in, params.blocks[bi].value, l.geometry(), g, i > 0 || grad_input);
        grads.blocks[bi].value = std::move(cg.weights);
        grads.blocks[bi + 1].value = std::move(cg.bias);
        g = std::move(cg.input);
        break;
      }
      case LayerKind::maxpool:
        g = maxpool_backward(in.shape(), trace.argmax[i], g);
        break;
      case LayerKind::relu:
        g = relu_backward(in, g);
        break;
      case LayerKind::dense: {
        const auto bi = block_of_layer_[i];
        auto dg = dense_backward(in, params.blocks[bi].value, g);
        grads.blocks[bi].value = std::move(dg.weights);
        grads.blocks[bi + 1].value = std::move(dg.bias);
        g = std::move(dg.input);
        break;
      }
      case LayerKind::softmax_head:
        break;
    }
  }
  if (grad_input) *grad_input = std::move(g);
  return grads;
}

Tensor Network::predict(const ParamSet& params, const Tensor& input) const {
  return softmax(forward(params, input));
}

GradCheckTarget make_gradcheck_target(const Network& net, ParamSet& params, Tensor& input,
                                      std::size_t true_class) {
  auto pattern = std::make_shared<std::uint64_t>(0);
  GradCheckTarget t;
  for (auto& b : params.blocks) t.blocks.push_back({b.name, &b.value});
  t.blocks.push_back({"input", &input});
  t.loss = [&net, &params, &input, true_class, pattern] {
    ForwardTrace tr;
    const Tensor logits = net.forward(params, input, &tr);
    *pattern = tr.activation_pattern();
    return softmax_cross_entropy(logits, true_class).loss;
  };
  t.activation_pattern = [pattern] { return *pattern; };
  t.analytic = [&net, &params, &input, true_class] {
    ForwardTrace tr;
    const Tensor logits = net.forward(params, input, &tr);
    const auto sl = softmax_cross_entropy(logits, true_class);
    Tensor gin;
    ParamSet g = net.backward(params, tr, sl.grad_logits, &gin);
    std::vector<Tensor> out;
    for (auto& b : g.blocks) out.push_back(std::move(b.value));
    out.push_back(std::move(gin));
    return out;
  };
  return t;
}

}  // namespace faceparse::netkit
