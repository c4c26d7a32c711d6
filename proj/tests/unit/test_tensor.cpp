#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "faceparse/error.hpp"
#include "faceparse/tensor/checksum.hpp"
#include "faceparse/tensor/gradcheck.hpp"
#include "faceparse/tensor/layers.hpp"
#include "faceparse/tensor/rng.hpp"
#include "faceparse/tensor/tensor.hpp"

using namespace faceparse;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Straight nested-loop convolution over an explicitly zero-padded copy.
Tensor conv_oracle(const Tensor& in, const Tensor& w, const Tensor& b, const ConvGeometry& g) {
  const std::size_t C = in.extent(0), H = in.extent(1), W = in.extent(2);
  const std::size_t Hp = H + g.pad.top + g.pad.bottom, Wp = W + g.pad.left + g.pad.right;
  std::vector<double> padded(C * Hp * Wp, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        padded[(c * Hp + y + g.pad.top) * Wp + x + g.pad.left] = in.at({c, y, x});
  const std::size_t F = w.extent(0);
  const std::size_t Ho = (Hp - g.kernel_h) / g.stride_h + 1;
  const std::size_t Wo = (Wp - g.kernel_w) / g.stride_w + 1;
  Tensor out({F, Ho, Wo});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx)
              acc += w.at({f, c, ky, kx}) *
                     padded[(c * Hp + i * g.stride_h + ky) * Wp + j * g.stride_w + kx];
        out.at({f, i, j}) = acc + b[f];
      }
  return out;
}

double project(const Tensor& out, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
  return s;
}

ConvGeometry random_geometry(Rng& rng) {
  ConvGeometry g;
  g.kernel_h = 1 + rng.below(3);
  g.kernel_w = 1 + rng.below(3);
  g.stride_h = 1 + rng.below(2);
  g.stride_w = 1 + rng.below(2);
  g.pad = {rng.below(2), rng.below(2), rng.below(2), rng.below(2)};
  return g;
}

}  // namespace

TEST_CASE("tensor invariants") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  t.at({1, 2, 3}) = 5.0;
  CHECK(t[23] == 5.0);
  CHECK_THROWS_AS(t.at({2, 0, 0}), ShapeError);
  CHECK_THROWS_AS(t.at({0, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
  CHECK(Tensor().empty());
}

TEST_CASE("rng matches the reference xoshiro256** stream") {
  Rng a(0);
  CHECK(a.next() == 0x99ec5f36cb75f2b4ULL);
  CHECK(a.next() == 0xbf6e1f784956452aULL);
  CHECK(a.next() == 0x1a5f849d4933e6e0ULL);
  Rng b(42);
  CHECK(b.next() == 0x15780b2e0c2ec716ULL);
  CHECK(b.next() == 0x6104d9866d113a7eULL);

  Rng c(7);
  for (int i = 0; i < 1000; ++i) {
    CHECK(c.below(5) < 5);
    const double u = c.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("output extent formula") {
  CHECK(output_extent(250, 5, 2, 1) == 124u);
  CHECK(output_extent(124, 3, 2, 1) == 62u);
  CHECK_FALSE(output_extent(3, 5, 1, 0).has_value());
  ConvGeometry g{5, 5, 2, 2, {0, 1, 0, 1}};
  CHECK(g.out_h(250) == 124);
  CHECK(g.out_w(250) == 124);
  CHECK_THROWS_AS(ConvGeometry({5, 5, 1, 1, {}}).out_h(3), ShapeError);
}

TEST_CASE("conv2d_forward worked example") {
  std::vector<double> v(16);
  std::iota(v.begin(), v.end(), 1.0);
  Tensor in({1, 4, 4}, v);
  Tensor w({1, 1, 3, 3}, 1.0);
  Tensor b({1}, 0.0);
  ConvGeometry g{3, 3, 1, 1, {}};
  Tensor out = conv2d_forward(in, w, b, g);
  CHECK(out.shape() == Shape{1, 2, 2});
  // oracle first, then the frozen values it produced
  CHECK(conv_oracle(in, w, b, g) == out);
  CHECK(out.storage() == std::vector<double>{54, 63, 90, 99});
}

TEST_CASE("conv2d_forward zero kernel gives the bias") {
  Rng rng(3);
  Tensor in = random_tensor({2, 6, 5}, rng);
  Tensor w({3, 2, 3, 3}, 0.0);
  Tensor b({3}, std::vector<double>{0.5, -2.0, 7.0});
  Tensor out = conv2d_forward(in, w, b, {3, 3, 1, 1, {1, 1, 1, 1}});
  for (std::size_t f = 0; f < 3; ++f)
    for (std::size_t i = 0; i < out.extent(1); ++i)
      for (std::size_t j = 0; j < out.extent(2); ++j) CHECK(out.at({f, i, j}) == b[f]);
}

TEST_CASE("conv2d_forward first table layer geometry") {
  Tensor in({1, 250, 250}, 0.25);
  Tensor w({1, 1, 5, 5}, 0.0);
  Tensor b({1}, 0.0);
  Tensor out = conv2d_forward(in, w, b, {5, 5, 2, 2, {0, 1, 0, 1}});
  CHECK(out.shape() == Shape{1, 124, 124});
}

TEST_CASE("conv2d_forward agrees with the nested-loop oracle on random geometries") {
  Rng rng(11);
  for (int draw = 0; draw < 100; ++draw) {
    ConvGeometry g = random_geometry(rng);
    const std::size_t C = 1 + rng.below(3), F = 1 + rng.below(3);
    Tensor in = random_tensor({C, 3 + rng.below(5), 3 + rng.below(5)}, rng);
    Tensor w = random_tensor({F, C, g.kernel_h, g.kernel_w}, rng);
    Tensor b = random_tensor({F}, rng);
    Tensor got = conv2d_forward(in, w, b, g);
    Tensor want = conv_oracle(in, w, b, g);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d shape errors name both shapes") {
  Tensor in({2, 5, 5});
  Tensor w({1, 3, 3, 3});
  Tensor b({1});
  try {
    conv2d_forward(in, w, b, {3, 3, 1, 1, {}});
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[1x3x3x3]") != std::string::npos);
    CHECK(msg.find("[2x5x5]") != std::string::npos);
  }
  Tensor w2({1, 2, 7, 7});
  CHECK_THROWS_AS(conv2d_forward(in, w2, b, {7, 7, 1, 1, {}}), ShapeError);
}

TEST_CASE("conv2d_backward trivial cases") {
  std::vector<double> v(16);
  std::iota(v.begin(), v.end(), 1.0);
  Tensor in({1, 4, 4}, v);
  Tensor w({1, 1, 3, 3}, 1.0);
  ConvGeometry g{3, 3, 1, 1, {}};

  ConvGrads zero = conv2d_backward(in, w, g, Tensor({1, 2, 2}, 0.0));
  for (double x : zero.input.data()) CHECK(x == 0.0);
  for (double x : zero.weights.data()) CHECK(x == 0.0);
  CHECK(zero.bias[0] == 0.0);

  ConvGrads ones = conv2d_backward(in, w, g, Tensor({1, 2, 2}, 1.0));
  CHECK(ones.bias.storage() == std::vector<double>{4.0});
  CHECK_THROWS_AS(conv2d_backward(in, w, g, Tensor({1, 3, 3})), ShapeError);
}

TEST_CASE("conv2d_backward matches central differences") {
  Rng rng(5);
  SUBCASE("1x5x5 input, 1x3x3 kernel") {
    Tensor in = random_tensor({1, 5, 5}, rng);
    Tensor w = random_tensor({1, 1, 3, 3}, rng);
    Tensor b = random_tensor({1}, rng);
    ConvGeometry g{3, 3, 1, 1, {}};
    Tensor r = random_tensor({1, 3, 3}, rng);
    GradCheckTarget t;
    t.blocks = {{"input", &in}, {"weights", &w}, {"bias", &b}};
    t.loss = [&] { return project(conv2d_forward(in, w, b, g), r); };
    t.analytic = [&] {
      auto gr = conv2d_backward(in, w, g, r);
      return std::vector<Tensor>{gr.input, gr.weights, gr.bias};
    };
    auto rep = gradient_check(t, {.step = 1e-5, .tolerance = 1e-4});
    CHECK(rep.passed());
  }
  SUBCASE("100 random geometries") {
    for (int draw = 0; draw < 100; ++draw) {
      ConvGeometry g = random_geometry(rng);
      const std::size_t C = 1 + rng.below(3), F = 1 + rng.below(3);
      Tensor in = random_tensor({C, 3 + rng.below(4), 3 + rng.below(4)}, rng);
      Tensor w = random_tensor({F, C, g.kernel_h, g.kernel_w}, rng);
      Tensor b = random_tensor({F}, rng);
      Tensor r = random_tensor(conv2d_forward(in, w, b, g).shape(), rng);
      GradCheckTarget t;
      t.blocks = {{"input", &in}, {"weights", &w}, {"bias", &b}};
      t.loss = [&] { return project(conv2d_forward(in, w, b, g), r); };
      t.analytic = [&] {
        auto gr = conv2d_backward(in, w, g, r);
        return std::vector<Tensor>{gr.input, gr.weights, gr.bias};
      };
      auto rep = gradient_check(t, {.step = 1e-5, .tolerance = 1e-4, .seed = std::uint64_t(draw)});
      CHECK_MESSAGE(rep.passed(), "draw ", draw, " max error ", rep.max_error());
    }
  }
}

TEST_CASE("maxpool_forward") {
  Tensor c({2, 5, 5}, 3.5);
  auto rc = maxpool_forward(c, {3, 3, 2, 2, {0, 1, 0, 1}});
  for (double v : rc.output.data()) CHECK(v == 3.5);

  auto r = maxpool_forward(Tensor({1, 2, 2}, std::vector<double>{1, 2, 3, 4}), {2, 2, 2, 2, {}});
  CHECK(r.output.storage() == std::vector<double>{4});
  CHECK(r.argmax == std::vector<std::size_t>{3});

  auto big = maxpool_forward(Tensor({1, 124, 124}), {3, 3, 2, 2, {0, 1, 0, 1}});
  CHECK(big.output.shape() == Shape{1, 62, 62});

  // ties go to the lowest flat index
  auto tie = maxpool_forward(Tensor({1, 2, 2}, std::vector<double>{1, 5, 5, 5}), {2, 2, 1, 1, {}});
  CHECK(tie.argmax == std::vector<std::size_t>{1});

  // padding acts as -inf and never wins against negative values
  auto neg = maxpool_forward(Tensor({1, 2, 2}, -2.0), {2, 2, 1, 1, {1, 0, 1, 0}});
  for (double v : neg.output.data()) CHECK(v == -2.0);

  // window entirely in padding
  CHECK_THROWS_AS(maxpool_forward(Tensor({1, 2, 2}), {2, 2, 1, 1, {2, 0, 0, 0}}), ShapeError);
  CHECK_THROWS_AS(maxpool_forward(Tensor({1, 2, 2}), {1, 1, 1, 1, {0, 1, 0, 0}}), ShapeError);
}

TEST_CASE("maxpool_backward matches central differences") {
  Rng rng(17);
  for (int draw = 0; draw < 100; ++draw) {
    ConvGeometry g = random_geometry(rng);
    g.kernel_h += 1;
    g.kernel_w += 1;
    Tensor in = random_tensor({1 + rng.below(2), 4 + rng.below(4), 4 + rng.below(4)}, rng);
    if (!windows_touch_input(in.extent(1), g.kernel_h, g.stride_h, g.pad.top, g.pad.bottom) ||
        !windows_touch_input(in.extent(2), g.kernel_w, g.stride_w, g.pad.left, g.pad.right))
      continue;
    PoolResult base = maxpool_forward(in, g);
    Tensor r = random_tensor(base.output.shape(), rng);
    std::uint64_t pattern = 0;
    GradCheckTarget t;
    t.blocks = {{"input", &in}};
    t.loss = [&] {
      auto pr = maxpool_forward(in, g);
      Fnv1a64 h;
      h.update(std::as_bytes(std::span(pr.argmax)));
      pattern = h.digest();
      return project(pr.output, r);
    };
    t.activation_pattern = [&] { return pattern; };
    t.analytic = [&] {
      auto pr = maxpool_forward(in, g);
      return std::vector<Tensor>{maxpool_backward(in.shape(), pr.argmax, r)};
    };
    auto rep = gradient_check(t, {.seed = std::uint64_t(draw)});
    CHECK_MESSAGE(rep.passed(), "draw ", draw, " max error ", rep.max_error());
  }
}

TEST_CASE("relu") {
  Tensor x({3}, std::vector<double>{-1, 0, 2});
  CHECK(relu_forward(x).storage() == std::vector<double>{0, 0, 2});
  Tensor neg({4}, -3.0);
  const Tensor zeroed = relu_forward(neg);
  for (double v : zeroed.data()) CHECK(v == 0.0);
  CHECK(relu_backward(x, Tensor({3}, 1.0)).storage() == std::vector<double>{0, 0, 1});

  Rng rng(23);
  for (int draw = 0; draw < 100; ++draw) {
    Tensor in = random_tensor({2, 3, 3}, rng);
    for (auto& v : in.data())
      if (std::abs(v) <= 1e-3) v = 0.5;
    CHECK(relu_forward(relu_forward(in)) == relu_forward(in));
    Tensor r = random_tensor(in.shape(), rng);
    GradCheckTarget t;
    t.blocks = {{"input", &in}};
    t.loss = [&] { return project(relu_forward(in), r); };
    t.analytic = [&] { return std::vector<Tensor>{relu_backward(in, r)}; };
    CHECK(gradient_check(t).passed());
  }
}

TEST_CASE("dense layer") {
  Tensor x({3}, std::vector<double>{1.5, -2, 4});
  Tensor eye({3, 3}, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(dense_forward(x, eye, Tensor({3}, 0.0)) == x);
  Tensor b({2}, std::vector<double>{0.25, -1});
  Tensor w({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(dense_forward(Tensor({3}, 0.0), w, b) == b);
  CHECK_THROWS_AS(dense_forward(Tensor({4}), w, b), ShapeError);

  Rng rng(29);
  for (int draw = 0; draw < 100; ++draw) {
    Tensor in = random_tensor({8}, rng);
    Tensor wr = random_tensor({4, 8}, rng);
    Tensor br = random_tensor({4}, rng);
    Tensor r = random_tensor({4}, rng);
    GradCheckTarget t;
    t.blocks = {{"input", &in}, {"weights", &wr}, {"bias", &br}};
    t.loss = [&] { return project(dense_forward(in, wr, br), r); };
    t.analytic = [&] {
      auto g = dense_backward(in, wr, r);
      return std::vector<Tensor>{g.input, g.weights, g.bias};
    };
    CHECK(gradient_check(t).passed());
  }
}

TEST_CASE("softmax cross-entropy") {
  auto z = softmax_cross_entropy(Tensor({7}, 0.0), 3);
  for (double p : z.probs.data()) CHECK(p == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  CHECK(z.loss == doctest::Approx(std::log(7.0)).epsilon(1e-15));
  CHECK(z.loss == doctest::Approx(1.945910).epsilon(1e-6));

  Tensor huge({7}, 0.0);
  huge[2] = 1000.0;
  CHECK(softmax_cross_entropy(huge, 2).loss < 1e-300);
  CHECK_THROWS_AS(softmax_cross_entropy(huge, 7), ShapeError);

  Rng rng(31);
  for (int draw = 0; draw < 100; ++draw) {
    Tensor logits = random_tensor({7}, rng, -5.0, 5.0);
    const std::size_t cls = rng.below(7);
    auto s = softmax_cross_entropy(logits, cls);
    double sum = 0.0;
    for (double p : s.probs.data()) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);

    Tensor shifted = logits;
    for (auto& v : shifted.data()) v += 123.25;
    auto ps = softmax(shifted);
    for (std::size_t i = 0; i < 7; ++i) CHECK(std::abs(ps[i] - s.probs[i]) <= 1e-12);

    GradCheckTarget t;
    t.blocks = {{"logits", &logits}};
    t.loss = [&] { return softmax_cross_entropy(logits, cls).loss; };
    t.analytic = [&] { return std::vector<Tensor>{softmax_cross_entropy(logits, cls).grad_logits}; };
    CHECK(gradient_check(t, {.tolerance = 1e-6}).passed());
  }
}

TEST_CASE("gradient_check reports") {
  Rng rng(37);
  SUBCASE("identity fragment") {
    Tensor x = random_tensor({10}, rng);
    GradCheckTarget t;
    t.blocks = {{"input", &x}};
    t.loss = [&] {
      double s = 0.0;
      for (double v : x.data()) s += 0.5 * v * v;
      return s;
    };
    t.analytic = [&] { return std::vector<Tensor>{x}; };
    auto rep = gradient_check(t);
    CHECK(rep.passed());
    CHECK(rep.max_error() < 1e-9);
  }
  SUBCASE("sign-flipped backward is flagged") {
    Tensor in = random_tensor({6}, rng);
    Tensor w = random_tensor({3, 6}, rng);
    Tensor b = random_tensor({3}, rng);
    Tensor r = random_tensor({3}, rng);
    GradCheckTarget t;
    t.blocks = {{"input", &in}, {"weights", &w}, {"bias", &b}};
    t.loss = [&] { return project(dense_forward(in, w, b), r); };
    t.analytic = [&] {
      auto g = dense_backward(in, w, r);
      for (auto& v : g.weights.data()) v = -v;
      return std::vector<Tensor>{g.input, g.weights, g.bias};
    };
    auto rep = gradient_check(t);
    CHECK_FALSE(rep.passed());
    CHECK(rep.failing_blocks() == std::vector<std::string>{"weights"});
  }
}
