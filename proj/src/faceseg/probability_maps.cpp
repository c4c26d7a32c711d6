#include "faceparse/faceseg/probability_maps.hpp"

#include <cmath>
#include <limits>

#include "faceparse/dataio/png.hpp"
#include "faceparse/error.hpp"

namespace faceparse::faceseg {

ProbabilityMaps::ProbabilityMaps(std::size_t w, std::size_t h) : width(w), height(h), values(kClassCount * w * h, 0.0) {
  if (w == 0 || h == 0) throw ShapeError("probability maps must be at least 1x1");
}

std::span<const double> ProbabilityMaps::plane(std::size_t cls) const {
  return std::span<const double>(values).subspan(cls * width * height, width * height);
}

Tensor ProbabilityMaps::as_tensor() const { return Tensor({kClassCount, height, width}, values); }

ProbabilityMaps ProbabilityMaps::from_tensor(const Tensor& t) {
  if (t.rank() != 3 || t.extent(0) != kClassCount) {
    throw ShapeError("probability maps need a [7,H,W] tensor, got " + to_string(t.shape()));
  }
  ProbabilityMaps p(t.extent(2), t.extent(1));
  p.values = t.storage();
  return p;
}

double ProbabilityMaps::max_sum_error() const {
  double worst = 0.0;
  const std::size_t n = width * height;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < kClassCount; ++c) s += values[c * n + i];
    const double e = std::abs(s - 1.0);
    if (!(e <= worst)) worst = std::isnan(e) ? std::numeric_limits<double>::infinity() : e;
  }
  return worst;
}

void ProbabilityMaps::validate(double tol) const {
  if (values.size() != kClassCount * width * height || width == 0 || height == 0) {
    throw FormatError("probability maps: size does not match 7 planes of " + std::to_string(width) + "x" +
                      std::to_string(height));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] >= 0.0)) {
      throw FormatError("probability maps: negative or NaN value in plane " +
                        std::to_string(i / (width * height)));
    }
  }
  const double e = max_sum_error();
  if (!(e <= tol)) throw FormatError("probability maps: a pixel's planes sum to 1 +- " + std::to_string(e));
}

PlaneStack ProbabilityMaps::to_planes() const { return PlaneStack{width, height, kClassCount, values}; }

ProbabilityMaps ProbabilityMaps::from_planes(const PlaneStack& s) {
  if (s.planes != kClassCount) {
    throw CompatibilityError("probability maps need 7 planes, got " + std::to_string(s.planes));
  }
  ProbabilityMaps p(s.width, s.height);
  p.values = s.values;
  return p;
}

LabelMask argmax_mask(const ProbabilityMaps& pms) {
  const std::size_t n = pms.width * pms.height;
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < kClassCount; ++c) {
      if (pms.values[c * n + i] > pms.values[best * n + i]) best = c;
    }
    labels[i] = static_cast<std::uint8_t>(best);
  }
  return LabelMask(pms.width, pms.height, std::move(labels));
}

std::vector<std::uint8_t> quantize_plane(std::span<const double> plane) {
  std::vector<std::uint8_t> out(plane.size());
  for (std::size_t i = 0; i < plane.size(); ++i) {
    const double p = std::min(1.0, std::max(0.0, plane[i]));
    out[i] = static_cast<std::uint8_t>(std::lround(255.0 * p));
  }
  return out;
}

std::vector<std::filesystem::path> export_pms(const ProbabilityMaps& pms, const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    const auto path = dir / ("pm_" + std::string(kPalette[c].name) + ".png");
    dataio::write_png(path, pms.width, pms.height, 1, quantize_plane(pms.plane(c)));
    written.push_back(path);
  }
  const auto sidecar = dir / kSidecarName;
  save_planes(sidecar, pms.to_planes());
  written.push_back(sidecar);
  return written;
}

ProbabilityMaps load_pms_sidecar(const std::filesystem::path& path) {
  return ProbabilityMaps::from_planes(load_planes(path, kClassCount));
}

}  // namespace faceparse::faceseg
