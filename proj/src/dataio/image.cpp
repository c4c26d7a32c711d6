#include "faceparse/dataio/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "faceparse/dataio/png.hpp"
#include "faceparse/error.hpp"
#include "faceparse/fileio.hpp"
#include "faceparse/palette.hpp"

namespace faceparse::dataio {

namespace {

void check_label(std::uint8_t v, std::size_t x, std::size_t y, const std::string& what) {
  if (v >= kClassCount) {
    throw MaskValueError(what + ": pixel (" + std::to_string(x) + ", " + std::to_string(y) + ") has value " +
                         std::to_string(v) + ", class indices stop at " + std::to_string(kClassCount - 1));
  }
}

std::uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(255.0 * c));
}

}  // namespace

LabelMask::LabelMask(std::size_t width, std::size_t height, std::uint8_t fill)
    : width_(width), height_(height), labels_(width * height, fill) {
  if (width == 0 || height == 0) throw ShapeError("mask extents must be >= 1");
  check_label(fill, 0, 0, "mask");
}

LabelMask::LabelMask(std::size_t width, std::size_t height, std::vector<std::uint8_t> labels)
    : width_(width), height_(height), labels_(std::move(labels)) {
  if (width == 0 || height == 0) throw ShapeError("mask extents must be >= 1");
  if (labels_.size() != width * height) {
    throw ShapeError("mask: " + std::to_string(labels_.size()) + " labels for " + std::to_string(width) + "x" +
                     std::to_string(height));
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) check_label(labels_[i], i % width, i / width, "mask");
}

void LabelMask::set(std::size_t x, std::size_t y, std::uint8_t label) {
  check_label(label, x, y, "mask");
  labels_.at(y * width_ + x) = label;
}

std::vector<std::size_t> LabelMask::histogram() const {
  std::vector<std::size_t> h(kClassCount, 0);
  for (auto v : labels_) ++h[v];
  return h;
}

Tensor decode_image(std::span<const std::byte> png, const std::string& what) {
  const RawImage raw = decode_png(png, what);
  if (raw.color != PngColor::rgb) {
    throw UnsupportedImageError(what + ": expected an 8-bit RGB PNG, got " + std::to_string(raw.channels) +
                                " channel(s)" + (raw.color == PngColor::palette ? " (palette)" : ""));
  }
  const std::size_t H = raw.height, W = raw.width;
  Tensor t({3, H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) t[(c * H + y) * W + x] = raw.pixels[(y * W + x) * 3 + c] / 255.0;
  return t;
}

Tensor load_image(const std::filesystem::path& path) { return decode_image(read_file_bytes(path), path.string()); }

std::vector<std::byte> encode_image(const Tensor& image) {
  if (image.rank() != 3 || (image.extent(0) != 1 && image.extent(0) != 3)) {
    throw ShapeError("encode_image: expected [1|3,H,W], got " + to_string(image.shape()));
  }
  const std::size_t C = image.extent(0), H = image.extent(1), W = image.extent(2);
  std::vector<std::uint8_t> px(C * H * W);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) px[(y * W + x) * C + c] = quantize(image[(c * H + y) * W + x]);
  return encode_png(W, H, C, px);
}

void save_image(const std::filesystem::path& path, const Tensor& image) {
  write_file_atomic(path, encode_image(image));
}

LabelMask decode_mask(std::span<const std::byte> png, const std::string& what) {
  RawImage raw = decode_png(png, what);
  if (raw.color != PngColor::gray && raw.color != PngColor::palette) {
    throw UnsupportedImageError(what + ": masks must be single-channel 8-bit PNG (gray or indexed)");
  }
  for (std::size_t i = 0; i < raw.pixels.size(); ++i) {
    check_label(raw.pixels[i], i % raw.width, i / raw.width, what);
  }
  return LabelMask(raw.width, raw.height, std::move(raw.pixels));
}

LabelMask load_mask(const std::filesystem::path& path) { return decode_mask(read_file_bytes(path), path.string()); }

std::vector<std::byte> encode_mask(const LabelMask& mask) {
  if (mask.empty()) throw ShapeError("encode_mask: empty mask");
  return encode_png(mask.width(), mask.height(), 1, mask.labels());
}

void save_mask(const std::filesystem::path& path, const LabelMask& mask) { write_file_atomic(path, encode_mask(mask)); }

void require_paired(const Tensor& image, const LabelMask& mask, const std::string& what) {
  if (image.rank() != 3 || image.extent(1) != mask.height() || image.extent(2) != mask.width()) {
    throw DimensionMismatchError(what + ": image " + to_string(image.shape()) + " and mask " +
                                 std::to_string(mask.width()) + "x" + std::to_string(mask.height()) +
                                 " (WxH) differ in size");
  }
}

namespace {

double source_coord(std::size_t dst, std::size_t in, std::size_t out) {
  const double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
  return std::clamp(s, 0.0, static_cast<double>(in - 1));
}

// Exact when a == b, so constant regions stay constant.
double lerp(double a, double b, double t) { return a + (b - a) * t; }

}  // namespace

Tensor resize(const Tensor& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3) throw ShapeError("resize: expected [C,H,W], got " + to_string(image.shape()));
  if (height == 0 || width == 0) throw ShapeError("resize: target extents must be >= 1");
  const std::size_t C = image.extent(0), H = image.extent(1), W = image.extent(2);
  if (H == height && W == width) return image;
  Tensor out({C, height, width});
  for (std::size_t y = 0; y < height; ++y) {
    const double sy = source_coord(y, H, height);
    const std::size_t y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, H - 1);
    const double ty = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double sx = source_coord(x, W, width);
      const std::size_t x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, W - 1);
      const double tx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < C; ++c) {
        const double* p = image.data().data() + c * H * W;
        const double top = lerp(p[y0 * W + x0], p[y0 * W + x1], tx);
        const double bottom = lerp(p[y1 * W + x0], p[y1 * W + x1], tx);
        out[(c * height + y) * width + x] = lerp(top, bottom, ty);
      }
    }
  }
  return out;
}

LabelMask resize(const LabelMask& mask, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ShapeError("resize: target extents must be >= 1");
  if (mask.height() == height && mask.width() == width) return mask;
  std::vector<std::uint8_t> out(height * width);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = std::min((2 * y + 1) * mask.height() / (2 * height), mask.height() - 1);
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = std::min((2 * x + 1) * mask.width() / (2 * width), mask.width() - 1);
      out[y * width + x] = mask.at(sx, sy);
    }
  }
  return LabelMask(width, height, std::move(out));
}

std::vector<double> luminance(const Tensor& image) {
  if (image.rank() != 3 || image.extent(0) != 3) {
    throw ShapeError("luminance: expected [3,H,W], got " + to_string(image.shape()));
  }
  const std::size_t n = image.extent(1) * image.extent(2);
  std::vector<double> y(n);
  const double* d = image.data().data();
  for (std::size_t i = 0; i < n; ++i) y[i] = 0.299 * d[i] + 0.587 * d[n + i] + 0.114 * d[2 * n + i];
  return y;
}

Tensor normalize_illumination(const Tensor& image) {
  const std::vector<double> y = luminance(image);
  const std::size_t n = y.size();
  std::vector<std::size_t> bin(n);
  std::array<std::size_t, 256> hist{};
  for (std::size_t i = 0; i < n; ++i) {
    bin[i] = quantize(y[i]);
    ++hist[bin[i]];
  }
  std::array<std::size_t, 256> cdf{};
  std::size_t run = 0;
  for (std::size_t b = 0; b < 256; ++b) cdf[b] = run += hist[b];
  std::size_t cdf_min = 0;
  for (std::size_t b = 0; b < 256; ++b) {
    if (hist[b]) {
      cdf_min = cdf[b];
      break;
    }
  }
  if (cdf_min == n) return image;

  Tensor out(image.shape());
  const double* d = image.data().data();
  double* o = out.data().data();
  const double denom = static_cast<double>(n - cdf_min);
  for (std::size_t i = 0; i < n; ++i) {
    const double target = static_cast<double>(cdf[bin[i]] - cdf_min) / denom;
    for (std::size_t c = 0; c < 3; ++c) {
      o[c * n + i] = std::clamp(target + (d[c * n + i] - y[i]), 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace faceparse::dataio
