#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "faceparse/attrclass/attribute.hpp"
#include "faceparse/dataio/synth.hpp"
#include "faceparse/error.hpp"
#include "faceparse/fileio.hpp"
#include "faceparse/tensor/layers.hpp"
#include "faceparse/tensor/rng.hpp"

using namespace faceparse;
using namespace faceparse::attrclass;
using faceseg::ProbabilityMaps;
namespace fs = std::filesystem;

namespace {

ProbabilityMaps random_pms(std::size_t w, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  ProbabilityMaps p(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      Tensor z({kClassCount});
      for (auto& v : z.data()) v = rng.normal();
      const Tensor s = softmax(z);
      for (std::size_t c = 0; c < kClassCount; ++c) p.at(c, x, y) = s[c];
    }
  return p;
}

ProbabilityMaps one_hot(const dataio::LabelMask& m) {
  ProbabilityMaps p(m.width(), m.height());
  for (std::size_t y = 0; y < m.height(); ++y)
    for (std::size_t x = 0; x < m.width(); ++x) p.at(m.at(x, y), x, y) = 1.0;
  return p;
}

const AttributeScheme kScheme{"style", {"style_a", "style_b"}};

std::vector<FeatureVector> synthetic_features(std::size_t n, std::uint64_t seed, std::vector<std::size_t>& labels) {
  std::vector<FeatureVector> out;
  for (const auto& s : dataio::generate_synthetic(dataio::default_synth_config(), seed, n)) {
    out.push_back(build_feature_vector(one_hot(s.mask), 32, 32));
    labels.push_back(s.label);
  }
  return out;
}

std::vector<LabeledFeature> pair_up(const std::vector<FeatureVector>& f, const std::vector<std::size_t>& labels) {
  std::vector<LabeledFeature> out;
  for (std::size_t i = 0; i < f.size(); ++i) out.push_back({&f[i], labels[i]});
  return out;
}

}  // namespace

TEST_CASE("feature vector") {
  SUBCASE("uniform maps give five planes of 1/7") {
    ProbabilityMaps p(6, 4);
    for (auto& v : p.values) v = 1.0 / 7.0;
    const FeatureVector f = build_feature_vector(p, 3, 3);
    CHECK(f.planes.shape() == Shape{5, 3, 3});
    for (double v : f.planes.data()) CHECK(v == 1.0 / 7.0);
  }
  SUBCASE("same size copies planes 2..6 bitwise in order") {
    const ProbabilityMaps p = random_pms(7, 5, 1);
    const FeatureVector f = build_feature_vector(p, 5, 7);
    for (std::size_t k = 0; k < 5; ++k) {
      const auto src = p.plane(k + 2);
      for (std::size_t i = 0; i < src.size(); ++i) CHECK(f.planes[k * 35 + i] == src[i]);
    }
  }
  SUBCASE("skin and back planes never enter") {
    const ProbabilityMaps p = random_pms(9, 9, 2);
    ProbabilityMaps q = p;
    Rng rng(3);
    for (std::size_t i = 0; i < 81; ++i) {
      q.values[i] = rng.uniform01();
      q.values[81 + i] = rng.uniform01();
    }
    CHECK(build_feature_vector(p, 4, 6).planes == build_feature_vector(q, 4, 6).planes);
    CHECK(build_feature_vector(p, 9, 9).planes == build_feature_vector(q, 9, 9).planes);
  }
  SUBCASE("resampling is per plane bilinear") {
    const ProbabilityMaps p = random_pms(10, 10, 4);
    const FeatureVector f = build_feature_vector(p, 5, 5);
    // 10 -> 5 with pixel-center alignment averages 2x2 blocks.
    for (std::size_t k = 0; k < 5; ++k)
      for (std::size_t y = 0; y < 5; ++y)
        for (std::size_t x = 0; x < 5; ++x) {
          const std::size_t c = k + 2;
          const double avg = (p.at(c, 2 * x, 2 * y) + p.at(c, 2 * x + 1, 2 * y) + p.at(c, 2 * x, 2 * y + 1) +
                              p.at(c, 2 * x + 1, 2 * y + 1)) /
                             4.0;
          CHECK(f.planes.at({k, y, x}) == doctest::Approx(avg).epsilon(1e-12));
        }
  }
  SUBCASE("degenerate target and sidecar round trip") {
    CHECK_THROWS_AS(build_feature_vector(random_pms(3, 3, 0), 0, 3), ConfigError);
    const fs::path dir = fs::temp_directory_path() / "faceparse_attr_fv";
    fs::remove_all(dir);
    FeatureVector f = build_feature_vector(random_pms(8, 6, 5), 6, 8);
    save_feature_vector(dir / "f.fppm", f);
    CHECK(load_feature_vector(dir / "f.fppm").planes == f.planes);
  }
}

TEST_CASE("classify") {
  const AttributeModel zero{netkit::toy_attribute_network(5, 3), {}, {"s", {"a", "b", "c"}}, {}};
  AttributeModel m = zero;
  m.params = netkit::Network(m.spec).zero_parameters();
  FeatureVector f{Tensor({5, 32, 32}, 0.3), "x"};
  const Classification c = classify(m, f);
  CHECK(c.label == 0);
  for (double p : c.probabilities) CHECK(std::abs(p - 1.0 / 3.0) < 1e-15);

  SUBCASE("probabilities sum to one and shifting logits keeps the answer") {
    Rng rng(7);
    for (int draw = 0; draw < 20; ++draw) {
      m.params = netkit::Network(m.spec).init_parameters(draw);
      for (auto& v : f.planes.data()) v = rng.uniform01();
      const Classification a = classify(m, f);
      double sum = 0.0;
      for (double p : a.probabilities) sum += p;
      CHECK(std::abs(sum - 1.0) <= 1e-9);
      AttributeModel shifted = m;
      for (auto& b : shifted.params.blocks) {
        if (b.name == "FC-2.bias") {
          for (auto& v : b.value.data()) v += 5.0;
        }
      }
      const Classification b = classify(shifted, f);
      CHECK(b.label == a.label);
      for (std::size_t i = 0; i < 3; ++i) CHECK(b.probabilities[i] == doctest::Approx(a.probabilities[i]).epsilon(1e-12));
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(classify(m, FeatureVector{Tensor({5, 16, 16}), "y"}), DimensionMismatchError);
  }
}

TEST_CASE("attribute training") {
  std::vector<std::size_t> labels;
  const auto feats = synthetic_features(20, 3, labels);
  const auto data = pair_up(feats, labels);
  const auto spec = netkit::toy_attribute_network(5, 2);
  const netkit::TrainConfig cfg{50, 0.01, 0.8, 8, 11};

  SUBCASE("separable groups reach full training accuracy within 50 epochs") {
    const auto r = train_attribute_model(data, kScheme, spec, cfg);
    std::size_t correct = 0;
    for (const auto& d : data) correct += classify(r.model, *d.feature).label == d.label;
    MESSAGE("training accuracy ", correct, "/", data.size(), " final loss ", r.history.epochs.back().mean_loss);
    CHECK(correct == data.size());

    const auto again = train_attribute_model(data, kScheme, spec, cfg);
    CHECK(netkit::encode_checkpoint(again.model.spec, again.model.params, {}) ==
          netkit::encode_checkpoint(r.model.spec, r.model.params, {}));

    const fs::path path = fs::temp_directory_path() / "faceparse_attr_model" / "m.fpkt";
    save_attribute_model(path, r.model);
    const AttributeModel back = load_attribute_model(path);
    CHECK(back.scheme == kScheme);
    CHECK(back.config == cfg);
    save_attribute_model(path.parent_path() / "m2.fpkt", back);
    CHECK(read_file_bytes(path) == read_file_bytes(path.parent_path() / "m2.fpkt"));
  }
  SUBCASE("labels need two examples each") {
    std::vector<LabeledFeature> few(data.begin(), data.end());
    for (auto& d : few) d.label = 0;
    few[0].label = 1;
    CHECK_THROWS_WITH_AS(train_attribute_model(few, kScheme, spec, cfg), doctest::Contains("style_b"), DataError);
  }
  SUBCASE("network must fit the scheme") {
    CHECK_THROWS_AS(train_attribute_model(data, kScheme, netkit::toy_attribute_network(5, 3), cfg), ConfigError);
    CHECK_THROWS_AS(train_attribute_model(data, kScheme, netkit::toy_attribute_network(4, 2), cfg), ConfigError);
  }
  SUBCASE("segmentation checkpoints are not attribute models") {
    const netkit::Network seg(netkit::toy_segmentation_network());
    const fs::path path = fs::temp_directory_path() / "faceparse_attr_model" / "seg.fpkt";
    netkit::save_checkpoint(path, seg.spec(), seg.zero_parameters(), {"segmentation", {}, 0, 0, {}});
    CHECK_THROWS_AS(load_attribute_model(path), CompatibilityError);
  }
}
