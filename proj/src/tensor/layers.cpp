#include "faceparse/tensor/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "faceparse/error.hpp"

namespace faceparse {

std::optional<std::size_t> output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                         std::size_t pad_total) {
  if (kernel == 0 || stride == 0) return std::nullopt;
  if (in + pad_total < kernel) return std::nullopt;
  return (in + pad_total - kernel) / stride + 1;
}

bool windows_touch_input(std::size_t in, std::size_t kernel, std::size_t stride,
                         std::size_t pad_before, std::size_t pad_after) {
  auto out = output_extent(in, kernel, stride, pad_before + pad_after);
  if (!out) return false;
  if (kernel <= pad_before) return false;
  return (*out - 1) * stride < in + pad_before;
}

namespace {

void validate_geometry(const ConvGeometry& g) {
  if (g.kernel_h == 0 || g.kernel_w == 0) throw ShapeError("kernel extents must be >= 1");
  if (g.stride_h == 0 || g.stride_w == 0) throw ShapeError("stride extents must be >= 1");
}

std::size_t checked_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t pad,
                           const char* axis) {
  auto out = output_extent(in, k, s, pad);
  if (!out || *out < 1) {
    throw ShapeError(std::string("non-positive output extent on ") + axis + " axis: input " +
                     std::to_string(in) + ", kernel " + std::to_string(k) + ", padding " +
                     std::to_string(pad));
  }
  return *out;
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape()));
  }
}

// Output positions o in [0, out) whose input coordinate o*stride + k - pad
// lies inside [0, in).
struct Span1 {
  std::size_t lo;
  std::size_t hi;
};

Span1 valid_range(std::size_t out, std::size_t in, std::size_t stride, std::size_t offset,
                  std::size_t pad) {
  // coordinate = o*stride + offset - pad
  std::size_t lo = 0;
  if (pad > offset) lo = (pad - offset + stride - 1) / stride;
  if (in + pad <= offset) return {0, 0};
  std::size_t hi = (in + pad - offset - 1) / stride + 1;
  hi = std::min(hi, out);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

// Four interleaved partial sums, combined pairwise; a fixed order.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// Row (c, ky, kx) holds the input sample under that tap for every output
// position; taps falling into padding stay 0.
std::vector<double> im2col(const Tensor& input, const ConvGeometry& geom, std::size_t Ho, std::size_t Wo) {
  const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
  const std::size_t kh = geom.kernel_h, kw = geom.kernel_w, P = Ho * Wo;
  std::vector<double> col(C * kh * kw * P, 0.0);
  const double* in = input.data().data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < kh; ++ky) {
      const Span1 rows = valid_range(Ho, H, geom.stride_h, ky, geom.pad.top);
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const Span1 cols = valid_range(Wo, W, geom.stride_w, kx, geom.pad.left);
        double* ck = col.data() + ((c * kh + ky) * kw + kx) * P;
        for (std::size_t i = rows.lo; i < rows.hi; ++i) {
          const double* irow = in + (c * H + i * geom.stride_h + ky - geom.pad.top) * W;
          for (std::size_t j = cols.lo; j < cols.hi; ++j) ck[i * Wo + j] = irow[j * geom.stride_w + kx - geom.pad.left];
        }
      }
    }
  return col;
}

}  // namespace

std::size_t ConvGeometry::out_h(std::size_t in_h) const {
  validate_geometry(*this);
  return checked_extent(in_h, kernel_h, stride_h, pad.top + pad.bottom, "height");
}

std::size_t ConvGeometry::out_w(std::size_t in_w) const {
  validate_geometry(*this);
  return checked_extent(in_w, kernel_w, stride_w, pad.left + pad.right, "width");
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const ConvGeometry& geom) {
  require_rank(input, 3, "conv2d input");
  require_rank(weights, 4, "conv2d weights");
  const std::size_t C = input.extent(0);
  const std::size_t F = weights.extent(0);
  if (weights.extent(1) != C || weights.extent(2) != geom.kernel_h ||
      weights.extent(3) != geom.kernel_w) {
    throw ShapeError("conv2d: weights " + to_string(weights.shape()) +
                     " do not match input " + to_string(input.shape()) + " and kernel " +
                     std::to_string(geom.kernel_h) + "x" + std::to_string(geom.kernel_w));
  }
  if (bias.size() != F) {
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " does not match weights " +
                     to_string(weights.shape()));
  }
  const std::size_t Ho = geom.out_h(input.extent(1)), Wo = geom.out_w(input.extent(2));
  const std::size_t K = C * geom.kernel_h * geom.kernel_w, P = Ho * Wo;
  const std::vector<double> col = im2col(input, geom, Ho, Wo);

  // Each output sums bias, then the taps in (c, ky, kx) order.
  Tensor out({F, Ho, Wo});
  const double* w = weights.data().data();
  double* o = out.data().data();
  for (std::size_t f = 0; f < F; ++f) {
    double* of = o + f * P;
    std::fill(of, of + P, bias[f]);
    const double* wf = w + f * K;
    for (std::size_t k = 0; k < K; ++k) {
      const double wv = wf[k];
      const double* ck = col.data() + k * P;
      for (std::size_t p = 0; p < P; ++p) of[p] += wv * ck[p];
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weights, const ConvGeometry& geom,
                          const Tensor& upstream, bool want_input_grad) {
  require_rank(input, 3, "conv2d input");
  require_rank(weights, 4, "conv2d weights");
  const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
  const std::size_t F = weights.extent(0);
  if (weights.extent(1) != C || weights.extent(2) != geom.kernel_h ||
      weights.extent(3) != geom.kernel_w) {
    throw ShapeError("conv2d: weights " + to_string(weights.shape()) +
                     " do not match input " + to_string(input.shape()));
  }
  const std::size_t Ho = geom.out_h(H), Wo = geom.out_w(W);
  const Shape expected{F, Ho, Wo};
  if (upstream.shape() != expected) {
    throw ShapeError("conv2d_backward: upstream " + to_string(upstream.shape()) +
                     " does not match forward output " + to_string(expected));
  }
  const std::size_t kh = geom.kernel_h, kw = geom.kernel_w;
  const std::size_t K = C * kh * kw, P = Ho * Wo;
  const std::vector<double> col = im2col(input, geom, Ho, Wo);

  ConvGrads g{want_input_grad ? Tensor(input.shape()) : Tensor(), Tensor(weights.shape()), Tensor({F})};
  const double* w = weights.data().data();
  const double* up = upstream.data().data();
  double* gw = g.weights.data().data();
  std::vector<double> gcol(want_input_grad ? K * P : 0, 0.0);

  for (std::size_t f = 0; f < F; ++f) {
    const double* uf = up + f * P;
    double sum = 0.0;
    for (std::size_t p = 0; p < P; ++p) sum += uf[p];
    g.bias[f] = sum;
    for (std::size_t k = 0; k < K; ++k) {
      const double* ck = col.data() + k * P;
      gw[f * K + k] = dot(uf, ck, P);
      if (want_input_grad) {
        const double wv = w[f * K + k];
        double* gk = gcol.data() + k * P;
        for (std::size_t p = 0; p < P; ++p) gk[p] += wv * uf[p];
      }
    }
  }
  if (want_input_grad) {
    double* gi = g.input.data().data();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const Span1 rows = valid_range(Ho, H, geom.stride_h, ky, geom.pad.top);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const Span1 cols = valid_range(Wo, W, geom.stride_w, kx, geom.pad.left);
          const double* gk = gcol.data() + ((c * kh + ky) * kw + kx) * P;
          for (std::size_t i = rows.lo; i < rows.hi; ++i) {
            double* girow = gi + (c * H + i * geom.stride_h + ky - geom.pad.top) * W;
            for (std::size_t j = cols.lo; j < cols.hi; ++j) {
              girow[j * geom.stride_w + kx - geom.pad.left] += gk[i * Wo + j];
            }
          }
        }
      }
  }
  return g;
}

PoolResult maxpool_forward(const Tensor& input, const ConvGeometry& geom) {
  require_rank(input, 3, "maxpool input");
  const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
  const std::size_t Ho = geom.out_h(H), Wo = geom.out_w(W);
  if (!windows_touch_input(H, geom.kernel_h, geom.stride_h, geom.pad.top, geom.pad.bottom) ||
      !windows_touch_input(W, geom.kernel_w, geom.stride_w, geom.pad.left, geom.pad.right)) {
    throw ShapeError("maxpool: a pooling window lies entirely inside the padding for input " +
                     to_string(input.shape()));
  }
  PoolResult r{Tensor({C, Ho, Wo}), std::vector<std::size_t>(C * Ho * Wo)};
  const double* in = input.data().data();
  double* o = r.output.data().data();
  const auto top = static_cast<std::ptrdiff_t>(geom.pad.top);
  const auto left = static_cast<std::ptrdiff_t>(geom.pad.left);

  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < Ho; ++i) {
      for (std::size_t j = 0; j < Wo; ++j) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        bool found = false;
        for (std::size_t ky = 0; ky < geom.kernel_h; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(i * geom.stride_h + ky) - top;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t kx = 0; kx < geom.kernel_w; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(j * geom.stride_w + kx) - left;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
            const std::size_t idx = (c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix);
            if (!found || in[idx] > best) {
              best = in[idx];
              best_idx = idx;
              found = true;
            }
          }
        }
        const std::size_t oi = (c * Ho + i) * Wo + j;
        o[oi] = best;
        r.argmax[oi] = best_idx;
      }
    }
  }
  return r;
}

Tensor maxpool_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                        const Tensor& upstream) {
  if (argmax.size() != upstream.size()) {
    throw ShapeError("maxpool_backward: upstream " + to_string(upstream.shape()) +
                     " does not match argmax record of " + std::to_string(argmax.size()));
  }
  Tensor g(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) {
    if (argmax[o] >= g.size()) throw ShapeError("maxpool_backward: argmax index out of range");
    g[argmax[o]] += upstream[o];
  }
  return g;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out = input;
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
  require_same_shape(input, upstream, "relu_backward");
  Tensor g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > 0.0 ? upstream[i] : 0.0;
  return g;
}

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(weights, 2, "dense weights");
  const std::size_t m = weights.extent(0), n = weights.extent(1);
  if (input.size() != n || bias.size() != m) {
    throw ShapeError("dense: input " + to_string(input.shape()) + ", weights " +
                     to_string(weights.shape()) + ", bias " + to_string(bias.shape()) +
                     " do not agree");
  }
  Tensor out({m});
  const double* x = input.data().data();
  const double* w = weights.data().data();
  for (std::size_t r = 0; r < m; ++r) {
    double acc = bias[r];
    const double* wr = w + r * n;
    for (std::size_t k = 0; k < n; ++k) acc += wr[k] * x[k];
    out[r] = acc;
  }
  return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream) {
  require_rank(weights, 2, "dense weights");
  const std::size_t m = weights.extent(0), n = weights.extent(1);
  if (input.size() != n || upstream.size() != m) {
    throw ShapeError("dense_backward: input " + to_string(input.shape()) + ", weights " +
                     to_string(weights.shape()) + ", upstream " + to_string(upstream.shape()) +
                     " do not agree");
  }
  DenseGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({m})};
  const double* x = input.data().data();
  const double* w = weights.data().data();
  double* gi = g.input.data().data();
  double* gw = g.weights.data().data();
  for (std::size_t r = 0; r < m; ++r) {
    const double u = upstream[r];
    g.bias[r] = u;
    const double* wr = w + r * n;
    double* gwr = gw + r * n;
    for (std::size_t k = 0; k < n; ++k) {
      gwr[k] = u * x[k];
      gi[k] += wr[k] * u;
    }
  }
  return g;
}

Tensor softmax(const Tensor& logits) {
  if (logits.empty()) throw ShapeError("softmax of an empty tensor");
  const std::size_t k = logits.size();
  double mx = logits[0];
  for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, logits[i]);
  Tensor p({k});
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (std::size_t i = 0; i < k; ++i) p[i] /= sum;
  return p;
}

SoftmaxLoss softmax_cross_entropy(const Tensor& logits, std::size_t true_class) {
  if (true_class >= logits.size()) {
    throw ShapeError("softmax_cross_entropy: class " + std::to_string(true_class) +
                     " out of range for " + std::to_string(logits.size()) + " logits");
  }
  const std::size_t k = logits.size();
  double mx = logits[0];
  for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += std::exp(logits[i] - mx);

  SoftmaxLoss r;
  r.probs = softmax(logits);
  r.loss = std::log(sum) - (logits[true_class] - mx);
  r.grad_logits = r.probs;
  r.grad_logits[true_class] -= 1.0;
  return r;
}

}  // namespace faceparse
