#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <map>

#include "faceparse/error.hpp"
#include "faceparse/fileio.hpp"
#include "faceparse/netkit/checkpoint.hpp"
#include "faceparse/netkit/network.hpp"
#include "faceparse/netkit/network_spec.hpp"
#include "faceparse/netkit/train.hpp"
#include "faceparse/tensor/rng.hpp"

using namespace faceparse;
using namespace faceparse::netkit;
namespace fs = std::filesystem;

namespace {

// Smallest total padding reproducing `declared`, by enumerating every
// (before, after) split up to 2k.
std::optional<std::size_t> minimal_total_padding(std::size_t in, std::size_t k, std::size_t s, std::size_t declared) {
  std::optional<std::size_t> best;
  for (std::size_t before = 0; before <= 2 * k; ++before)
    for (std::size_t after = 0; before + after <= 2 * k; ++after) {
      if (in + before + after < k) continue;
      if ((in + before + after - k) / s + 1 != declared) continue;
      if (!best || before + after < *best) best = before + after;
    }
  return best;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("faceparse_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::pair<std::size_t, std::size_t>> conv_pool_rows(const NetworkSpec& spec) {
  std::vector<std::pair<std::size_t, std::size_t>> rows;
  for (const auto& s : infer_shapes(spec)) {
    if (s.kind == LayerKind::conv || s.kind == LayerKind::maxpool) rows.emplace_back(s.output[1], s.output[0]);
  }
  return rows;
}

}  // namespace

TEST_CASE("paper network reproduces every reference output size and map count") {
  const NetworkSpec spec = paper_network();
  const std::vector<std::pair<std::size_t, std::size_t>> table = {
      {124, 96}, {62, 96}, {30, 256}, {15, 256}, {12, 316}, {6, 316}, {4, 512}, {2, 512}};
  CHECK(conv_pool_rows(spec) == table);
  for (const auto& s : infer_shapes(spec)) {
    if (s.kind == LayerKind::conv || s.kind == LayerKind::maxpool) CHECK(s.output[1] == s.output[2]);
  }
}

TEST_CASE("resolved paddings are minimal and follow the search order") {
  const NetworkSpec spec = paper_network();
  std::size_t in = 250;
  std::map<std::string, Padding> got;
  for (const auto& l : spec.layers) {
    if (l.kind != LayerKind::conv && l.kind != LayerKind::maxpool) continue;
    REQUIRE(l.padding.has_value());
    const auto total = l.padding->top + l.padding->bottom;
    CHECK(minimal_total_padding(in, l.kernel_h, l.stride_h, l.declared_output->first) == total);
    CHECK(l.padding->top <= l.padding->bottom);
    got[l.name] = *l.padding;
    in = l.declared_output->first;
  }
  for (const char* name : {"CL-1", "PL-1", "CL-2", "PL-2", "CL-3", "PL-3", "PL-4"}) {
    const Padding expected{0, 1, 0, 1};
    CHECK_MESSAGE(got[name] == expected, name);
  }
  // top 0 would leave the last window entirely in the padding
  const Padding cl4{1, 4, 1, 4};
  CHECK(got["CL-4"] == cl4);
}

TEST_CASE("resolve_padding edge cases") {
  NetworkSpec s;
  s.name = "t";
  s.input_shape = {1, 9, 9};
  s.class_count = 2;
  s.layers = {LayerSpec::conv("c", 3, 2, 2, std::pair<std::size_t, std::size_t>{4, 4}), LayerSpec::dense("d", 2),
              LayerSpec::softmax_head()};
  const NetworkSpec r = resolve_padding(s);
  const Padding none{};
  CHECK(r.layers[0].padding == none);
  CHECK(resolve_padding(r) == r);
  CHECK(resolve_padding(paper_network()) == paper_network());

  s.layers[0].declared_output = std::pair<std::size_t, std::size_t>{20, 20};
  try {
    resolve_padding(s);
    FAIL("expected rejection");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("layer 'c'") != std::string::npos);
  }
}

TEST_CASE("shape inference") {
  SUBCASE("toy profiles shrink strictly") {
    for (const NetworkSpec& spec : {toy_segmentation_network(), toy_attribute_network(5, 2)}) {
      std::size_t prev = spec.input_shape[1];
      for (auto [size, maps] : conv_pool_rows(spec)) {
        CHECK(size < prev);
        prev = size;
      }
    }
    using Rows = std::vector<std::pair<std::size_t, std::size_t>>;
    CHECK(conv_pool_rows(toy_segmentation_network()) == Rows{{15, 16}, {7, 16}, {5, 32}, {2, 32}});
    CHECK(conv_pool_rows(toy_attribute_network(5, 2)) == Rows{{14, 16}, {6, 16}, {4, 32}, {1, 32}});
  }
  SUBCASE("dense-only network") {
    NetworkSpec s;
    s.input_shape = {2, 3, 3};
    s.class_count = 4;
    s.layers = {LayerSpec::dense("d", 4), LayerSpec::softmax_head()};
    CHECK(infer_shapes(s).back().output == Shape{4});
  }
  SUBCASE("errors") {
    NetworkSpec s;
    s.input_shape = {1, 4, 4};
    s.class_count = 2;
    s.layers = {LayerSpec::conv("c", 5, 1, 2), LayerSpec::dense("d", 2), LayerSpec::softmax_head()};
    CHECK_THROWS_AS(infer_shapes(s), ShapeError);  // unresolved
    CHECK_THROWS_AS(resolve_padding(s), ShapeError);  // 4 < 5
    s.layers = {LayerSpec::dense("d", 3), LayerSpec::softmax_head()};
    CHECK_THROWS_AS(infer_shapes(s), ShapeError);  // head sees 3 values, 2 classes
    s.layers = {LayerSpec::dense("d", 2)};
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
}

TEST_CASE("network spec json round trip") {
  for (const NetworkSpec& spec : {paper_network(), toy_segmentation_network(), toy_attribute_network(5, 3)}) {
    nlohmann::json j = spec;
    CHECK(j.get<NetworkSpec>() == spec);
  }
}

TEST_CASE("init_parameters") {
  const Network net(toy_segmentation_network());
  const ParamSet a = net.init_parameters(7);
  CHECK(a == net.init_parameters(7));
  CHECK_FALSE(a == net.init_parameters(8));
  for (const auto& b : a.blocks) {
    if (b.name.ends_with(".bias")) {
      for (double v : b.value.data()) CHECK(v == 0.0);
    }
  }
  // CL-1 of the paper network: 96 maps of 3x5x5 filters.
  const Network paper(paper_network());
  const ParamSet p = paper.init_parameters(123);
  const Tensor& w = p.find("CL-1.weight")->value;
  REQUIRE(w.shape() == Shape{96, 3, 5, 5});
  const double bound = std::sqrt(6.0 / 75.0);
  double sum = 0.0;
  for (double v : w.data()) {
    CHECK(std::abs(v) <= bound);
    sum += v;
  }
  const double n = static_cast<double>(w.size());
  const double standard_error = bound / std::sqrt(3.0) / std::sqrt(n);
  CHECK(std::abs(sum / n) < 3.0 * standard_error);
}

TEST_CASE("composed toy network passes the gradient check") {
  const Network net(toy_segmentation_network());
  Rng rng(99);
  std::size_t skipped = 0;
  for (int draw = 0; draw < 20; ++draw) {
    ParamSet params = net.init_parameters(derive_seed(5, draw));
    for (auto& b : params.blocks) {
      if (b.name.ends_with(".bias")) {
        for (auto& v : b.value.data()) v = rng.uniform(-0.1, 0.1);
      }
    }
    Tensor input = random_tensor(net.input_shape(), rng);
    const std::size_t cls = rng.below(7);
    auto target = make_gradcheck_target(net, params, input, cls);
    auto rep = gradient_check(target, {.max_coords_per_block = 8, .seed = std::uint64_t(draw)});
    CHECK_MESSAGE(rep.passed(), "draw ", draw, " max error ", rep.max_error());
    for (const auto& b : rep.blocks) skipped += b.skipped_kinks;
  }
  MESSAGE("coordinates skipped at kinks: ", skipped);
}

TEST_CASE("momentum update rule") {
  ParamSet w{{{"w", Tensor({1}, 0.0)}}};
  ParamSet g{{{"w", Tensor({1}, 1.0)}}};
  MomentumSgd opt(0.1, 0.8);
  opt.step(w, g);
  CHECK(opt.velocity().blocks[0].value[0] == doctest::Approx(-0.1).epsilon(1e-15));
  opt.step(w, g);
  CHECK(opt.velocity().blocks[0].value[0] == doctest::Approx(-0.18).epsilon(1e-15));
  CHECK(w.blocks[0].value[0] == doctest::Approx(-0.28).epsilon(1e-15));

  // closed form v_t = -eta * sum_i mu^(t-i) g_i with the full-size schedule values
  const double eta = 1e-5, mu = 0.8;
  MomentumSgd sgd(eta, mu);
  ParamSet x{{{"w", Tensor({1}, 0.5)}}};
  std::vector<double> gs;
  Rng rng(4);
  double w_expected = 0.5;
  for (int t = 1; t <= 10; ++t) {
    gs.push_back(rng.uniform(-2.0, 2.0));
    sgd.step(x, ParamSet{{{"w", Tensor({1}, gs.back())}}});
    double v = 0.0;
    for (int i = 1; i <= t; ++i) v += std::pow(mu, t - i) * gs[i - 1];
    v *= -eta;
    w_expected += v;
    CHECK(std::abs(sgd.velocity().blocks[0].value[0] - v) <= 1e-12);
    CHECK(std::abs(x.blocks[0].value[0] - w_expected) <= 1e-12);
  }
}

TEST_CASE("training loop") {
  const Network net(toy_segmentation_network());
  Rng rng(2024);
  std::vector<Sample> batch;
  for (std::size_t i = 0; i < 8; ++i) batch.push_back({random_tensor(net.input_shape(), rng), i % 7});

  SUBCASE("overfits one batch of 8 patches within 500 steps") {
    TrainConfig cfg{1000, 0.05, 0.8, 8, 1};
    double last = 1e9;
    std::size_t steps = 0;
    TrainCallbacks cb;
    cb.on_step = [&](std::size_t step, double loss) {
      last = loss;
      steps = step + 1;
      return loss >= 0.01 && steps < 500;
    };
    train(net, net.init_parameters(1), batch, cfg, cb);
    MESSAGE("steps: ", steps, " loss: ", last);
    CHECK(last < 0.01);
    CHECK(steps <= 500);
  }
  SUBCASE("zero learning rate is a fixed point") {
    const ParamSet p0 = net.init_parameters(3);
    auto r = train(net, p0, batch, TrainConfig{3, 0.0, 0.8, 3, 9});
    CHECK(r.params == p0);
    CHECK(r.history.epochs.size() == 3);
  }
  SUBCASE("deterministic given seed, config and data") {
    TrainConfig cfg{2, 0.01, 0.8, 3, 17};
    auto a = train(net, net.init_parameters(3), batch, cfg);
    auto b = train(net, net.init_parameters(3), batch, cfg);
    CHECK(a.params == b.params);
    CHECK(a.history.epochs == b.history.epochs);
    CHECK(a.history.steps == 6);  // 8 samples, batch 3: 3+3+2
  }
  SUBCASE("batch larger than the dataset is clamped") {
    auto r = train(net, net.init_parameters(3), batch, TrainConfig{2, 0.01, 0.8, 250, 1});
    CHECK(r.history.steps == 2);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(train(net, net.init_parameters(3), std::span<const Sample>{}, TrainConfig{}), DataError);
    std::vector<Sample> bad = {{batch[0].input, 7}};
    CHECK_THROWS_AS(train(net, net.init_parameters(3), bad, TrainConfig{}), DataError);
    ParamSet nan_params = net.init_parameters(3);
    nan_params.blocks.back().value[0] = std::nan("");
    try {
      train(net, nan_params, batch, TrainConfig{1, 0.01, 0.0, 4, 0});
      FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
      CHECK(std::string(e.what()).find("step 0") != std::string::npos);
    }
    CHECK_THROWS_AS(TrainConfig({0, 0.1, 0.5, 1, 0}).validate(), ConfigError);
    CHECK_THROWS_AS(TrainConfig({1, 0.1, 1.0, 1, 0}).validate(), ConfigError);
  }
}

TEST_CASE("checkpoint round trip and failure modes") {
  const fs::path dir = temp_dir("checkpoint");
  const NetworkSpec spec = toy_segmentation_network();
  const Network net(spec);
  const ParamSet params = net.init_parameters(11);
  CheckpointMeta meta{"segmentation", TrainConfig{5, 0.01, 0.8, 16, 11}, 5, 11, {{"note", "x"}}};
  const fs::path path = dir / "m.fpkt";
  save_checkpoint(path, spec, params, meta);
  CHECK_FALSE(fs::exists(dir / "m.fpkt.tmp"));

  const auto bytes = read_file_bytes(path);
  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.spec == spec);
  CHECK(ck.meta == meta);
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    for (std::size_t i = 0; i < params.blocks[b].value.size(); ++i) {
      CHECK(ck.params.blocks[b].value[i] == static_cast<double>(static_cast<float>(params.blocks[b].value[i])));
    }
  }
  // re-encoding the loaded checkpoint reproduces the file byte for byte
  CHECK(encode_checkpoint(ck.spec, ck.params, ck.meta) == bytes);

  SUBCASE("corrupted payload byte") {
    auto bad = bytes;
    bad[bad.size() - 20] ^= std::byte{0x01};
    CHECK_THROWS_AS(decode_checkpoint(bad), ChecksumError);
  }
  SUBCASE("version mismatch") {
    auto bad = bytes;
    bad[4] = std::byte{2};
    CHECK_THROWS_AS(decode_checkpoint(bad), VersionError);
  }
  SUBCASE("truncated") {
    for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
      std::vector<std::byte> bad(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
      CHECK_THROWS_AS(decode_checkpoint(bad), TruncatedError);
    }
  }
  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[0] = std::byte{'X'};
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  }
  SUBCASE("incompatible class count") {
    NetworkSpec other = spec;
    other.class_count = 5;
    other.layers[other.layers.size() - 2].units = 5;
    CHECK_THROWS_AS(load_checkpoint(path, other), CompatibilityError);
    CHECK_NOTHROW(load_checkpoint(path, spec));
  }
  fs::remove_all(dir);
}

TEST_CASE("paper network on an odd input keeps every output size") {
  const auto a = infer_shapes(paper_network());
  const auto b = infer_shapes(paper_network(3, 7, 249));
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].output == b[i].output);
  const Padding cl1{0, 2, 0, 2};
  CHECK(resolve_padding(paper_network(3, 7, 249)).layers[0].padding == cl1);
}
