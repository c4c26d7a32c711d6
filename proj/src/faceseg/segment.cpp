#include "faceparse/faceseg/segment.hpp"

#include <algorithm>
#include <limits>

#include "faceparse/error.hpp"
#include "faceparse/tensor/layers.hpp"
#include "faceparse/tensor/rng.hpp"

namespace faceparse::faceseg {

using nlohmann::json;
using netkit::LayerKind;

void PatchPlan::validate() const {
  if (patch == 0 || patch % 2 == 0) throw ConfigError("patch plan: patch size must be odd, got " + std::to_string(patch));
  if (stride == 0) throw ConfigError("patch plan: stride must be >= 1");
  if (border != "reflect") throw ConfigError("patch plan: unsupported border policy '" + border + "'");
}

void to_json(json& j, const PatchPlan& p) { j = json{{"patch", p.patch}, {"stride", p.stride}, {"border", p.border}}; }

void from_json(const json& j, PatchPlan& p) {
  p.patch = j.at("patch").get<std::size_t>();
  p.stride = j.value("stride", std::size_t{1});
  p.border = j.value("border", std::string("reflect"));
  p.validate();
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - m);
}

Tensor reflect_pad(const Tensor& image, std::size_t r) {
  if (image.rank() != 3) throw ShapeError("reflect_pad: expected [C,H,W], got " + to_string(image.shape()));
  const std::size_t C = image.extent(0), H = image.extent(1), W = image.extent(2);
  const std::size_t Hp = H + 2 * r, Wp = W + 2 * r;
  Tensor out({C, Hp, Wp});
  std::vector<std::size_t> xs(Wp);
  for (std::size_t x = 0; x < Wp; ++x) {
    xs[x] = reflect_index(static_cast<std::ptrdiff_t>(x) - static_cast<std::ptrdiff_t>(r), W);
  }
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < Hp; ++y) {
      const std::size_t sy = reflect_index(static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(r), H);
      const double* src = image.data().data() + (c * H + sy) * W;
      double* dst = out.data().data() + (c * Hp + y) * Wp;
      for (std::size_t x = 0; x < Wp; ++x) dst[x] = src[xs[x]];
    }
  return out;
}

namespace {

// Patch whose top-left corner sits at (x, y) of an already padded image.
Tensor crop(const Tensor& padded, std::size_t x, std::size_t y, std::size_t p) {
  const std::size_t C = padded.extent(0), Hp = padded.extent(1), Wp = padded.extent(2);
  Tensor out({C, p, p});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < p; ++i) {
      const double* src = padded.data().data() + (c * Hp + y + i) * Wp + x;
      std::copy(src, src + p, out.data().data() + (c * p + i) * p);
    }
  return out;
}

}  // namespace

Tensor extract_patch(const Tensor& image, std::size_t x, std::size_t y, const PatchPlan& plan) {
  plan.validate();
  if (image.rank() != 3 || x >= image.extent(2) || y >= image.extent(1)) {
    throw ShapeError("extract_patch: center (" + std::to_string(x) + ", " + std::to_string(y) + ") outside " +
                     to_string(image.shape()));
  }
  const std::size_t C = image.extent(0), H = image.extent(1), W = image.extent(2);
  const std::size_t p = plan.patch, r = plan.radius();
  Tensor out({C, p, p});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < p; ++i) {
      const std::size_t sy = reflect_index(static_cast<std::ptrdiff_t>(y + i) - static_cast<std::ptrdiff_t>(r), H);
      for (std::size_t j = 0; j < p; ++j) {
        const std::size_t sx =
            reflect_index(static_cast<std::ptrdiff_t>(x + j) - static_cast<std::ptrdiff_t>(r), W);
        out[(c * p + i) * p + j] = image[(c * H + sy) * W + sx];
      }
    }
  return out;
}

PatchSet sample_training_patches(const Tensor& image, const dataio::LabelMask& mask, const PatchPlan& plan,
                                 std::uint64_t seed, std::size_t quota) {
  plan.validate();
  if (quota < 1) throw ConfigError("sample_training_patches: quota must be >= 1");
  dataio::require_paired(image, mask, "sample_training_patches");
  std::array<std::vector<std::size_t>, kClassCount> pixels;
  for (std::size_t y = 0; y < mask.height(); y += plan.stride)
    for (std::size_t x = 0; x < mask.width(); x += plan.stride) pixels[mask.at(x, y)].push_back(y * mask.width() + x);

  const Tensor padded = reflect_pad(image, plan.radius());
  PatchSet set;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    auto& cand = pixels[c];
    set.report.available[c] = cand.size();
    if (cand.empty()) {
      set.report.absent.push_back(c);
      continue;
    }
    Rng rng(derive_seed(seed, c));
    const std::size_t take = std::min(quota, cand.size());
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t pick = k + static_cast<std::size_t>(rng.below(cand.size() - k));
      std::swap(cand[k], cand[pick]);
      const std::size_t x = cand[k] % mask.width(), y = cand[k] / mask.width();
      set.samples.push_back({crop(padded, x, y, plan.patch), c});
      set.centers.emplace_back(x, y);
    }
    set.report.drawn[c] = take;
  }
  return set;
}

bool supports_fast_path(const netkit::Network& net) {
  bool dense_seen = false;
  for (const auto& l : net.spec().layers) {
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::maxpool:
        if (dense_seen) return false;
        if (!l.padding || l.padding->top || l.padding->bottom || l.padding->left || l.padding->right) return false;
        if (l.kernel_h != l.kernel_w || l.stride_h != l.stride_w) return false;
        break;
      case LayerKind::dense:
        dense_seen = true;
        break;
      default:
        break;
    }
  }
  return true;
}

namespace {

void check_inputs(const netkit::Network& net, const Tensor& image, const PatchPlan& plan) {
  plan.validate();
  if (net.class_count() != kClassCount) {
    throw CompatibilityError("segment: the model predicts " + std::to_string(net.class_count()) +
                             " classes, face parsing needs " + std::to_string(kClassCount));
  }
  const Shape& in = net.input_shape();
  if (in[1] != plan.patch || in[2] != plan.patch) {
    throw CompatibilityError("segment: model input " + to_string(in) + " does not match patch size " +
                             std::to_string(plan.patch));
  }
  if (image.rank() != 3 || image.extent(0) != in[0]) {
    throw DimensionMismatchError("segment: image " + to_string(image.shape()) + " does not have the model's " +
                                 std::to_string(in[0]) + " channels");
  }
  if (image.extent(1) < plan.patch || image.extent(2) < plan.patch) {
    throw DimensionMismatchError("segment: image " + to_string(image.shape()) + " is smaller than one " +
                                 std::to_string(plan.patch) + "x" + std::to_string(plan.patch) + " patch");
  }
}

void store(ProbabilityMaps& pms, std::size_t x, std::size_t y, const Tensor& probs) {
  for (std::size_t c = 0; c < kClassCount; ++c) pms.at(c, x, y) = probs[c];
}

ProbabilityMaps segment_naive(const netkit::Network& net, const netkit::ParamSet& params, const Tensor& image,
                              const PatchPlan& plan) {
  const std::size_t H = image.extent(1), W = image.extent(2);
  const Tensor padded = reflect_pad(image, plan.radius());
  ProbabilityMaps pms(W, H);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) store(pms, x, y, net.predict(params, crop(padded, x, y, plan.patch)));
  return pms;
}

// Feature maps evaluated at every offset of the padded image. A layer seen
// with dilation d reads its input at (y + d*ky, x + d*kx); each stride
// multiplies d. Per output element the accumulation order (bias, then
// channel, ky, kx) equals conv2d_forward's, so results agree bitwise.
struct DenseMap {
  std::size_t channels, h, w, dilation;
  std::vector<double> v;  // [c][y][x]
};

DenseMap conv_map(const DenseMap& in, const Tensor& weights, const Tensor& bias, std::size_t k, std::size_t s) {
  const std::size_t d = in.dilation, reach = d * (k - 1);
  DenseMap out{weights.extent(0), in.h - reach, in.w - reach, d * s, {}};
  out.v.resize(out.channels * out.h * out.w);
  const double* w = weights.data().data();
  for (std::size_t f = 0; f < out.channels; ++f) {
    double* of = out.v.data() + f * out.h * out.w;
    std::fill(of, of + out.h * out.w, bias[f]);
    for (std::size_t c = 0; c < in.channels; ++c) {
      const double* ic = in.v.data() + c * in.h * in.w;
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wv = w[((f * in.channels + c) * k + ky) * k + kx];
          for (std::size_t y = 0; y < out.h; ++y) {
            const double* irow = ic + (y + d * ky) * in.w + d * kx;
            double* orow = of + y * out.w;
            for (std::size_t x = 0; x < out.w; ++x) orow[x] += wv * irow[x];
          }
        }
    }
  }
  return out;
}

DenseMap pool_map(const DenseMap& in, std::size_t k, std::size_t s) {
  const std::size_t d = in.dilation, reach = d * (k - 1);
  DenseMap out{in.channels, in.h - reach, in.w - reach, d * s, {}};
  out.v.resize(out.channels * out.h * out.w);
  for (std::size_t c = 0; c < in.channels; ++c) {
    const double* ic = in.v.data() + c * in.h * in.w;
    for (std::size_t y = 0; y < out.h; ++y)
      for (std::size_t x = 0; x < out.w; ++x) {
        double best = ic[y * in.w + x];
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) {
            const double v = ic[(y + d * ky) * in.w + x + d * kx];
            if (v > best) best = v;
          }
        out.v[(c * out.h + y) * out.w + x] = best;
      }
  }
  return out;
}

ProbabilityMaps segment_fast(const netkit::Network& net, const netkit::ParamSet& params, const Tensor& image,
                             const PatchPlan& plan) {
  const std::size_t H = image.extent(1), W = image.extent(2);
  const Tensor padded = reflect_pad(image, plan.radius());
  DenseMap map{padded.extent(0), padded.extent(1), padded.extent(2), 1, padded.storage()};

  const auto& layers = net.spec().layers;
  const auto& shapes = net.shapes();
  std::size_t li = 0;
  // Spatial extent (per patch) of the current layer's output grid.
  std::size_t grid_h = plan.patch, grid_w = plan.patch;
  for (; li < layers.size() && layers[li].kind != LayerKind::dense && layers[li].kind != LayerKind::softmax_head;
       ++li) {
    const auto& l = layers[li];
    if (l.kind == LayerKind::conv) {
      map = conv_map(map, params.find(l.name + ".weight")->value, params.find(l.name + ".bias")->value, l.kernel_h,
                     l.stride_h);
    } else if (l.kind == LayerKind::maxpool) {
      map = pool_map(map, l.kernel_h, l.stride_h);
    } else if (l.kind == LayerKind::relu) {
      for (auto& v : map.v) v = v > 0.0 ? v : 0.0;
    }
    grid_h = shapes[li].output.size() == 3 ? shapes[li].output[1] : 1;
    grid_w = shapes[li].output.size() == 3 ? shapes[li].output[2] : 1;
  }

  const std::size_t C = map.channels, d = map.dilation;
  ProbabilityMaps pms(W, H);
  Tensor features({C, grid_h, grid_w});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < grid_h; ++i)
          for (std::size_t j = 0; j < grid_w; ++j) {
            features[(c * grid_h + i) * grid_w + j] = map.v[(c * map.h + y + d * i) * map.w + x + d * j];
          }
      Tensor act = features;
      for (std::size_t k = li; k < layers.size(); ++k) {
        const auto& l = layers[k];
        if (l.kind == LayerKind::dense) {
          act = dense_forward(act, params.find(l.name + ".weight")->value, params.find(l.name + ".bias")->value);
        } else if (l.kind == LayerKind::relu) {
          act = relu_forward(act);
        }
      }
      store(pms, x, y, softmax(act));
    }
  return pms;
}

}  // namespace

ProbabilityMaps segment(const netkit::Network& net, const netkit::ParamSet& params, const Tensor& image,
                        const PatchPlan& plan, InferenceMode mode) {
  check_inputs(net, image, plan);
  net.check_parameters(params);
  const bool fast = supports_fast_path(net);
  if (mode == InferenceMode::fast && !fast) {
    throw ConfigError("segment: fast inference needs unpadded conv/pool layers in network '" + net.spec().name + "'");
  }
  if (mode == InferenceMode::naive || !fast) return segment_naive(net, params, image, plan);
  return segment_fast(net, params, image, plan);
}

}  // namespace faceparse::faceseg
