#include "faceparse/dataio/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "faceparse/error.hpp"
#include "faceparse/palette.hpp"
#include "faceparse/tensor/rng.hpp"

namespace faceparse::dataio {

using nlohmann::json;

void SynthConfig::validate() const {
  if (size < 24) throw ConfigError("synth: image size must be >= 24");
  if (families.size() < 2) throw ConfigError("synth: at least two style families are required");
  const double s = static_cast<double>(size);
  if (face_rx - face_jitter < 4.0 || face_ry - face_jitter < 4.0) throw ConfigError("synth: face too small");
  // The hair ellipse must stay clear of the left and right edges so that
  // background columns always exist.
  if (face_rx + face_jitter + center_jitter + 2.0 >= s / 2.0 - 1.0) {
    throw ConfigError("synth: face (with hair) does not leave any background inside a " + std::to_string(size) +
                      " pixel image");
  }
  if (!(hair_line > 0.0 && hair_line < 1.0)) throw ConfigError("synth: hair_line must lie in (0, 1)");
  if (!(shape_jitter >= 0.0 && shape_jitter < 0.5)) throw ConfigError("synth: shape_jitter must lie in [0, 0.5)");
  if (!(brightness_lo > 0.0 && brightness_lo <= brightness_hi)) throw ConfigError("synth: bad brightness range");
  if (noise < 0.0) throw ConfigError("synth: noise must be >= 0");
  for (const auto& f : families) {
    for (double axis : {f.eye_rx, f.eye_ry, f.mouth_rx, f.mouth_ry, f.brow_w, f.brow_h, f.nose_rx, f.nose_ry}) {
      if (axis * (1.0 - shape_jitter) < 0.6) {
        throw ConfigError("synth: family '" + f.name + "' has a shape axis too small to cover a pixel");
      }
    }
  }
}

SynthConfig default_synth_config() {
  SynthConfig c;
  StyleFamily a;
  a.name = "style_a";
  a.eye_rx = 3.2, a.eye_ry = 2.0;
  a.mouth_rx = 3.2, a.mouth_ry = 1.2;
  StyleFamily b;
  b.name = "style_b";
  b.eye_rx = 2.2, b.eye_ry = 1.3;
  b.mouth_rx = 5.2, b.mouth_ry = 2.0;
  c.families = {a, b};
  return c;
}

void to_json(json& j, const StyleFamily& f) {
  j = json{{"name", f.name},         {"eye_rx", f.eye_rx},   {"eye_ry", f.eye_ry},   {"mouth_rx", f.mouth_rx},
           {"mouth_ry", f.mouth_ry}, {"brow_w", f.brow_w},   {"brow_h", f.brow_h},   {"nose_rx", f.nose_rx},
           {"nose_ry", f.nose_ry}};
}

void from_json(const json& j, StyleFamily& f) {
  f.name = j.at("name").get<std::string>();
  f.eye_rx = j.at("eye_rx").get<double>();
  f.eye_ry = j.at("eye_ry").get<double>();
  f.mouth_rx = j.at("mouth_rx").get<double>();
  f.mouth_ry = j.at("mouth_ry").get<double>();
  f.brow_w = j.at("brow_w").get<double>();
  f.brow_h = j.at("brow_h").get<double>();
  f.nose_rx = j.at("nose_rx").get<double>();
  f.nose_ry = j.at("nose_ry").get<double>();
}

void to_json(json& j, const SynthConfig& c) {
  j = json{{"size", c.size},
           {"face_rx", c.face_rx},
           {"face_ry", c.face_ry},
           {"face_jitter", c.face_jitter},
           {"center_jitter", c.center_jitter},
           {"shape_jitter", c.shape_jitter},
           {"hair_line", c.hair_line},
           {"eye_spacing", c.eye_spacing},
           {"eye_drop", c.eye_drop},
           {"brow_gap", c.brow_gap},
           {"nose_drop", c.nose_drop},
           {"mouth_drop", c.mouth_drop},
           {"brightness_lo", c.brightness_lo},
           {"brightness_hi", c.brightness_hi},
           {"noise", c.noise},
           {"families", c.families}};
}

void from_json(const json& j, SynthConfig& c) {
  SynthConfig d = default_synth_config();
  c.size = j.value("size", d.size);
  c.face_rx = j.value("face_rx", d.face_rx);
  c.face_ry = j.value("face_ry", d.face_ry);
  c.face_jitter = j.value("face_jitter", d.face_jitter);
  c.center_jitter = j.value("center_jitter", d.center_jitter);
  c.shape_jitter = j.value("shape_jitter", d.shape_jitter);
  c.hair_line = j.value("hair_line", d.hair_line);
  c.eye_spacing = j.value("eye_spacing", d.eye_spacing);
  c.eye_drop = j.value("eye_drop", d.eye_drop);
  c.brow_gap = j.value("brow_gap", d.brow_gap);
  c.nose_drop = j.value("nose_drop", d.nose_drop);
  c.mouth_drop = j.value("mouth_drop", d.mouth_drop);
  c.brightness_lo = j.value("brightness_lo", d.brightness_lo);
  c.brightness_hi = j.value("brightness_hi", d.brightness_hi);
  c.noise = j.value("noise", d.noise);
  c.families = j.contains("families") ? j["families"].get<std::vector<StyleFamily>>() : d.families;
  c.validate();
}

namespace {

struct Ellipse {
  double cx, cy, rx, ry;
  bool contains(double x, double y) const {
    const double dx = (x - cx) / rx, dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
  }
};

struct Box {
  double cx, cy, hw, hh;
  bool contains(double x, double y) const { return std::abs(x - cx) <= hw && std::abs(y - cy) <= hh; }
};

using Rgb = std::array<double, 3>;

}  // namespace

SynthSample generate_sample(const SynthConfig& config, std::uint64_t seed, std::size_t index) {
  config.validate();
  // Consecutive samples (one per family) share every non-family draw; the
  // family shapes and pixel noise come from a per-sample stream.
  const std::size_t families = config.families.size();
  Rng shared(derive_seed(seed, 0x5E7, index / families));
  Rng rng(derive_seed(seed, 0x5E8, index));
  const std::size_t label = index % families;
  const StyleFamily& fam = config.families[label];
  const double half = static_cast<double>(config.size) / 2.0;
  auto jitter = [&](double v, double amount) { return v + shared.uniform(-amount, amount); };
  auto shape = [&](double v) { return v * (1.0 + rng.uniform(-config.shape_jitter, config.shape_jitter)); };

  // Geometry shared by all families.
  const double cx = jitter(half, config.center_jitter);
  const double cy = jitter(half + 1.0, config.center_jitter);
  const Ellipse face{cx, cy, jitter(config.face_rx, config.face_jitter), jitter(config.face_ry, config.face_jitter)};
  const Ellipse hair{cx, cy, face.rx + 2.0, face.ry + 2.0};
  const double hair_y = cy - config.hair_line * face.ry;

  // Family geometry.
  const double eye_y = cy - config.eye_drop;
  const double erx = shape(fam.eye_rx), ery = shape(fam.eye_ry);
  const Ellipse eye_l{cx - config.eye_spacing, eye_y, erx, ery};
  const Ellipse eye_r{cx + config.eye_spacing, eye_y, erx, ery};
  const double brow_y = eye_y - ery - config.brow_gap;
  const double bw = shape(fam.brow_w) / 2.0, bh = shape(fam.brow_h) / 2.0;
  const Box brow_l{eye_l.cx, brow_y, bw, bh};
  const Box brow_r{eye_r.cx, brow_y, bw, bh};
  const Ellipse nose{cx, cy + config.nose_drop, shape(fam.nose_rx), shape(fam.nose_ry)};
  const Ellipse mouth{cx, cy + config.mouth_drop, shape(fam.mouth_rx), shape(fam.mouth_ry)};

  // Colors, then a global brightness factor.
  const double tone = shared.uniform(0.55, 0.85);
  const double bg = shared.uniform(0.25, 0.45);
  const double hair_tone = shared.uniform(0.12, 0.25);
  std::array<Rgb, kClassCount> color;
  color[kBack] = {bg * 0.8, bg * 0.9, bg * 1.2};
  color[kSkin] = {tone, tone * 0.78, tone * 0.62};
  color[kHair] = {hair_tone, hair_tone * 0.8, hair_tone * 0.6};
  color[kEyes] = {0.15, 0.3, 0.7};
  color[kBrows] = {0.5, 0.33, 0.15};
  color[kNose] = {tone * 0.8, tone * 0.55, tone * 0.45};
  color[kMouth] = {0.75, 0.2, 0.25};
  const double brightness = shared.uniform(config.brightness_lo, config.brightness_hi);

  const std::size_t n = config.size;
  std::vector<std::uint8_t> labels(n * n);
  Tensor image({3, n, n});
  for (std::size_t py = 0; py < n; ++py) {
    for (std::size_t px = 0; px < n; ++px) {
      const double x = static_cast<double>(px) + 0.5, y = static_cast<double>(py) + 0.5;
      std::uint8_t c = kBack;
      if (hair.contains(x, y) && y < hair_y) {
        c = kHair;
      } else if (face.contains(x, y)) {
        c = kSkin;
        if (eye_l.contains(x, y) || eye_r.contains(x, y)) c = kEyes;
        else if (brow_l.contains(x, y) || brow_r.contains(x, y)) c = kBrows;
        else if (mouth.contains(x, y)) c = kMouth;
        else if (nose.contains(x, y)) c = kNose;
      }
      labels[py * n + px] = c;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = color[c][ch] * brightness + config.noise * rng.normal();
        image[(ch * n + py) * n + px] = std::clamp(v, 0.0, 1.0);
      }
    }
  }

  SynthSample s;
  char id[32];
  std::snprintf(id, sizeof id, "face_%04zu", index);
  s.id = id;
  s.image = std::move(image);
  s.mask = LabelMask(n, n, std::move(labels));
  s.label = label;
  const auto hist = s.mask.histogram();
  for (std::size_t c = 0; c < kClassCount; ++c) {
    if (hist[c] == 0) {
      throw ConfigError("synth: class '" + std::string(kPalette[c].name) + "' vanished in sample " + s.id +
                        "; enlarge the geometry ranges");
    }
  }
  return s;
}

std::vector<SynthSample> generate_synthetic(const SynthConfig& config, std::uint64_t seed, std::size_t n) {
  if (n < 1) throw ConfigError("synth: n must be >= 1");
  std::vector<SynthSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_sample(config, seed, i));
  return out;
}

DatasetManifest write_synthetic(const std::filesystem::path& dir, const SynthConfig& config, std::uint64_t seed,
                                std::size_t n) {
  DatasetManifest m;
  m.root = dir;
  AttributeScheme scheme{"style", {}};
  for (const auto& f : config.families) scheme.labels.push_back(f.name);
  scheme.validate();
  m.scheme = scheme;
  for (const auto& s : generate_synthetic(config, seed, n)) {
    ManifestEntry e;
    e.id = s.id;
    e.image = "images/" + s.id + ".png";
    e.mask = "masks/" + s.id + ".png";
    e.label = s.label;
    save_image(m.resolve(e.image), s.image);
    save_mask(m.resolve(*e.mask), s.mask);
    m.entries.push_back(std::move(e));
  }
  refresh_digests(m);
  save_manifest(m);
  return m;
}

}  // namespace faceparse::dataio
