#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "corrpost/tensornet/model.hpp"
#include "corrpost/tensornet/optimizer.hpp"
#include "gradcheck.hpp"

using namespace corrpost;
using namespace corrpost::nn;

using namespace corrpost::testing;

TEST_CASE("conv2d: identity kernel reproduces the input") {
  Conv2d<double> conv(1, 1, 3, 1, "c");
  conv.weight().value.fill(0.0);
  conv.weight().value[4] = 1.0;
  std::mt19937_64 rng(1);
  const TD x = random_tensor({1, 1, 4, 4}, rng);
  CHECK(conv.forward(x, Mode::kInfer) == x);
}

TEST_CASE("conv2d: all-ones kernel counts zero-padded neighbours") {
  Conv2d<double> conv(1, 1, 3, 1, "c");
  conv.weight().value.fill(1.0);
  const TD y = conv.forward(TD({1, 1, 3, 3}, 1.0), Mode::kInfer);
  const std::vector<double> expected = {4, 6, 4, 6, 9, 6, 4, 6, 4};
  for (std::size_t i = 0; i < 9; ++i) CHECK(y[i] == expected[i]);
}

TEST_CASE("conv2d: shapes and errors") {
  Conv2d<double> conv(1, 3, 3, 2, "c");
  CHECK(conv.forward(TD({1, 1, 8, 8}), Mode::kInfer).shape() == std::vector<std::size_t>{1, 3, 4, 4});
  CHECK_THROWS_AS(conv.forward(TD({1, 2, 8, 8}), Mode::kInfer), ShapeError);
  CHECK_THROWS_AS(conv.forward(TD({1, 1, 7, 7}), Mode::kInfer), ShapeError);
  CHECK_THROWS_AS(Conv2d<double>(1, 1, 5, 1, "bad"), ShapeError);
  CHECK_THROWS_AS(conv.backward(TD({1, 3, 4, 4})), StateError);
}

TEST_CASE("conv2d: direct summation oracle") {
  std::mt19937_64 rng(2);
  for (std::size_t kernel : {1, 3}) {
    for (std::size_t stride : {1, 2}) {
      Conv2d<double> conv(3, 4, kernel, stride, "c");
      conv.weight().value = random_tensor(conv.weight().value.shape(), rng);
      const TD x = random_tensor({2, 3, 6, 6}, rng);
      const TD y = conv.forward(x, Mode::kTrain);
      const long pad = kernel == 3 ? 1 : 0;
      const std::size_t oh = 6 / stride;
      double worst = 0.0;
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t k = 0; k < 4; ++k)
          for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < oh; ++ox) {
              double s = 0.0;
              for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t ky = 0; ky < kernel; ++ky)
                  for (std::size_t kx = 0; kx < kernel; ++kx) {
                    const long iy = static_cast<long>(oy * stride + ky) - pad;
                    const long ix = static_cast<long>(ox * stride + kx) - pad;
                    if (iy < 0 || ix < 0 || iy >= 6 || ix >= 6) continue;
                    s += conv.weight().value[((k * 3 + c) * kernel + ky) * kernel + kx] *
                         x[((n * 3 + c) * 6 + iy) * 6 + ix];
                  }
              worst = std::max(worst, std::abs(s - y[((n * 4 + k) * oh + oy) * oh + ox]));
            }
      CHECK(worst < 1e-12);
    }
  }
}

TEST_CASE("batchnorm: train-mode moments and running statistics") {
  std::mt19937_64 rng(3);
  BatchNorm2d<double> bn(3, "bn");
  const TD x = random_tensor({4, 3, 5, 5}, rng, 3.0);
  const TD y = bn.forward(x, Mode::kTrain);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, sq = 0.0, in_mean = 0.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 25; ++i) {
        mean += y[(n * 3 + c) * 25 + i];
        in_mean += x[(n * 3 + c) * 25 + i];
      }
    mean /= 100.0;
    in_mean /= 100.0;
    double in_var = 0.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 25; ++i) {
        sq += std::pow(y[(n * 3 + c) * 25 + i] - mean, 2);
        in_var += std::pow(x[(n * 3 + c) * 25 + i] - in_mean, 2);
      }
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(sq / 100.0 - 1.0) < 1e-4);
    CHECK(bn.running_mean().value[c] == doctest::Approx(0.1 * in_mean).epsilon(1e-12));
    CHECK(bn.running_var().value[c] == doctest::Approx(0.9 + 0.1 * in_var / 99.0).epsilon(1e-12));
  }
}

TEST_CASE("batchnorm: constant channels, infer affine, degenerate batch") {
  BatchNorm2d<double> bn(2, "bn");
  TD x({2, 2, 2, 2});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i / 4) % 2 == 0 ? 7.0 : -2.0;
  const TD zeroed = bn.forward(x, Mode::kTrain);
  for (double v : zeroed.data()) CHECK(v == 0.0);

  BatchNorm2d<double> affine(1, "bn");
  affine.gain().value.fill(2.0);
  affine.shift().value.fill(3.0);
  std::mt19937_64 rng(4);
  const TD z = random_tensor({3, 1, 2, 2}, rng);
  const TD out = affine.forward(z, Mode::kInfer);
  for (std::size_t i = 0; i < z.size(); ++i) {
    CHECK(out[i] == doctest::Approx(2.0 * z[i] / std::sqrt(1.0 + kBatchNormEpsilon) + 3.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(affine.forward(TD({1, 1, 1, 1}), Mode::kTrain), DegenerateError);
  affine.running_var().value.fill(std::nan(""));
  CHECK_THROWS_AS(affine.forward(z, Mode::kInfer), StateError);
}

TEST_CASE("swish values and derivative") {
  CHECK(swish(0.0) == 0.0);
  CHECK(swish(10.0) == doctest::Approx(10.0 / (1.0 + std::exp(-10.0))).epsilon(1e-15));
  CHECK(swish(10.0) == doctest::Approx(9.999546).epsilon(1e-7));
  CHECK(swish_derivative(0.0) == 0.5);
  CHECK(std::isfinite(swish(-800.0)));
  CHECK(sigmoid(-800.0) == 0.0);

  // f(x) = swish(3x) at x = 1
  const double h = 1e-4;
  const double numeric = (swish(3.0 * (1.0 + h)) - swish(3.0 * (1.0 - h))) / (2 * h);
  CHECK(rel_err(3.0 * swish_derivative(3.0), numeric) < 1e-6);
}

TEST_CASE("residual block: zero branch leaves swish of the skip") {
  std::mt19937_64 rng(5);
  ResidualBlock<double> block(3, 3, 1, "b");
  CHECK_FALSE(block.has_projection());
  block.conv1().weight().value.fill(0.0);
  block.conv2().weight().value.fill(0.0);
  const TD x = random_tensor({2, 3, 4, 4}, rng);
  const TD y = block.forward(x, Mode::kTrain);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(swish(x[i])).epsilon(1e-12));

  ResidualBlock<double> down(3, 5, 2, "d");
  CHECK(down.has_projection());
  CHECK(down.forward(random_tensor({1, 3, 8, 8}, rng), Mode::kInfer).shape() ==
        std::vector<std::size_t>{1, 5, 4, 4});
  CHECK_THROWS_AS(down.forward(random_tensor({1, 4, 8, 8}, rng), Mode::kInfer), ShapeError);
}

TEST_CASE("global average pool and dense sigmoid") {
  GlobalAvgPool<double> pool;
  CHECK(pool.forward(TD({1, 1, 3, 3}, 4.25), Mode::kInfer)[0] == 4.25);
  CHECK(pool.forward(TD({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}), Mode::kInfer)[0] == 2.5);
  std::mt19937_64 rng(6);
  const TD x = random_tensor({2, 3, 4, 4}, rng);
  const TD m = pool.forward(x, Mode::kInfer);
  for (std::size_t nc = 0; nc < 6; ++nc) {
    double s = 0.0;
    for (std::size_t i = 0; i < 16; ++i) s += x[nc * 16 + i];
    CHECK(std::abs(m[nc] - s / 16.0) < 1e-6);
  }

  DenseSigmoid<double> dense(4, "d");
  std::vector<Parameter<double>*> params;
  dense.collect(params);
  std::size_t count = 0;
  for (auto* p : params) count += p->trainable ? p->value.size() : 0;
  CHECK(count == 5);

  CHECK(dense.forward(random_tensor({3, 4}, rng), Mode::kInfer)[1] == 0.5);
  dense.weight().value.fill(-100.0);
  const TD sat = dense.forward(TD({1, 4}, 10.0), Mode::kInfer);
  CHECK(std::isfinite(sat[0]));
  CHECK(sat[0] < 1e-300);

  dense.weight().value = random_tensor({4}, rng);
  dense.bias().value[0] = 0.3;
  const TD f = random_tensor({2, 4}, rng);
  const TD p = dense.forward(f, Mode::kInfer);
  for (std::size_t n = 0; n < 2; ++n) {
    double z = 0.3;
    for (std::size_t c = 0; c < 4; ++c) z += dense.weight().value[c] * f[n * 4 + c];
    CHECK(p[n] == doctest::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-14));
  }
}

TEST_CASE("binary cross-entropy and L2 term") {
  CHECK(bce(TD({1}, 0.5), TD({1}, 1.0)) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const double perfect = bce(TD({2}, std::vector<double>{1.0, 0.0}), TD({2}, std::vector<double>{1.0, 0.0}));
  CHECK(perfect == doctest::Approx(-std::log(1.0 - kProbabilityClamp)).epsilon(1e-9));
  CHECK(perfect < 1e-6);

  Parameter<double> w("w", {2}, 0.0, true, true);
  w.value[0] = 3.0;
  w.value[1] = 4.0;
  Parameter<double> gain("g", {2}, 10.0, true, false);
  const std::vector<Parameter<double>*> params = {&w, &gain};
  CHECK(l2_penalty(params, 0.005) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(bce_loss(TD({1}, 0.5), TD({1}, 1.0), params, 0.005) == doctest::Approx(std::log(2.0) + 0.125));
  add_l2_gradient(params, 0.005);
  CHECK(w.grad[0] == doctest::Approx(0.03));
  CHECK(gain.grad[0] == 0.0);

  // Clamped predictions carry no gradient.
  const TD g = bce_gradient(TD({3}, std::vector<double>{0.0, 1.0, 0.25}), TD({3}, std::vector<double>{1.0, 1.0, 0.0}));
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == doctest::Approx((1.0 / 0.75) / 3.0));
  CHECK_THROWS_AS(bce(TD({2}), TD({3})), ShapeError);
}

TEST_CASE("gradient check: every layer kind") {
  for (const auto& c : all_layer_gradient_errors(7)) {
    INFO(c.name);
    CHECK(c.error < kGradTol);
  }
}

TEST_CASE("gradient check: two-block micro network with BCE and L2") {
  const NetworkCheck r = micro_network_gradient_error(11);
  ResNet<double> model(ArchSpec{2, {1, 2}, 1, 8}, 11);
  CHECK(r.checked == model.param_count());
  CHECK(r.checked == expected_params(2, {1, 2}, 1));
  CHECK(r.error < kGradTol);
}

TEST_CASE("backward ordering is enforced") {
  ResNet<double> model(ArchSpec{2, {1, 2}, 1, 8}, 1);
  const TD labels({2}, 1.0);
  CHECK_THROWS_AS(model.backward(labels, 0.0), StateError);
  model.forward(TD({2, 1, 8, 8}, 0.5), Mode::kInfer);
  CHECK_THROWS_AS(model.backward(labels, 0.0), StateError);
  std::mt19937_64 rng(1);
  model.forward(random_tensor({2, 1, 8, 8}, rng), Mode::kTrain);
  model.backward(labels, 0.0);
  CHECK_THROWS_AS(model.backward(labels, 0.0), StateError);
  Swish<double> s;
  CHECK_THROWS_AS(s.backward(TD({1})), StateError);
}

TEST_CASE("optimizers") {
  Parameter<double> p("p", {1}, 1.0, true, false);
  p.grad[0] = 2.0;
  Sgd<double>(SgdConfig{0.1, 0.0}).step({&p});
  CHECK(p.value[0] == doctest::Approx(0.8).epsilon(1e-15));

  p.value[0] = 1.0;
  p.grad[0] = 0.0;
  Sgd<double>(SgdConfig{0.1, 0.0}).step({&p});
  CHECK(p.value[0] == 1.0);

  // Momentum: v1 = g, v2 = 0.9 g + g.
  p.grad[0] = 1.0;
  Sgd<double> momentum(SgdConfig{0.1, 0.9});
  momentum.step({&p});
  momentum.step({&p});
  CHECK(p.value[0] == doctest::Approx(1.0 - 0.1 - 0.19).epsilon(1e-14));

  // First Adam step: bias-corrected moments equal g and g^2.
  for (double g : {0.37, -2.5, 1e-3}) {
    Parameter<double> q("q", {1}, 0.5, true, false);
    q.grad[0] = g;
    const AdamConfig cfg;
    Adam<double> adam(cfg);
    adam.step({&q});
    const double m = (1 - cfg.beta1) * g / (1 - cfg.beta1);
    const double v = (1 - cfg.beta2) * g * g / (1 - cfg.beta2);
    CHECK(q.value[0] == doctest::Approx(0.5 - cfg.lr * m / (std::sqrt(v) + cfg.eps)).epsilon(1e-12));
    CHECK(adam.steps() == 1);
  }

  Parameter<double> bad("bad", {2}, 1.0, true, false);
  bad.grad[1] = std::nan("");
  Adam<double> adam(AdamConfig{});
  CHECK_THROWS_AS(adam.step({&bad}), DivergenceError);
  CHECK(bad.value[0] == 1.0);
  CHECK_THROWS_AS(Sgd<double>(SgdConfig{}).step({&bad}), DivergenceError);
}

TEST_CASE("parameter count of the default architecture") {
  ResNet<float> model(ArchSpec{}, 0);
  const std::size_t expected = expected_params(21, {1, 2, 4, 8}, 2);
  CHECK(expected == 1204794);
  CHECK(model.param_count() == expected);
  CHECK(param_count(model) == expected);
  CHECK(model.param_count() >= 1000000);
  CHECK(model.param_count() <= 1400000);

  const double ratio = static_cast<double>(expected_params(42, {1, 2, 4, 8}, 2, true)) /
                       static_cast<double>(expected_params(21, {1, 2, 4, 8}, 2, true));
  CHECK(ratio > 3.99);
  CHECK(ratio < 4.0);
  ResNet<float> wide(ArchSpec{42, {1, 2, 4, 8}, 2, 32}, 0);
  CHECK(wide.param_count() == expected_params(42, {1, 2, 4, 8}, 2));
}

TEST_CASE("default model shape algebra follows the architecture table") {
  ResNet<float> model(ArchSpec{}, 3);
  std::mt19937_64 rng(9);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  Tensor<float> x({1, 1, 32, 32});
  for (auto& v : x.data()) v = dist(rng);
  const Tensor<float> y = model.forward(x, Mode::kInfer);
  CHECK(y.shape() == std::vector<std::size_t>{1});
  CHECK(y[0] > 0.0f);
  CHECK(y[0] < 1.0f);

  const auto table = model.architecture();
  REQUIRE(table.size() == 4 + 8 + 3);
  CHECK(table.front().kind == LayerKind::kInputBn);
  CHECK(table.back().kind == LayerKind::kSigmoid);
  Tensor<float> h({1, 21, 32, 32}, 0.1f);
  std::size_t row = 4;
  for (auto& block : model.blocks()) {
    h = block->forward(h, Mode::kInfer);
    const auto& spec = table[row++];
    CHECK(spec.kind == LayerKind::kResBlock);
    CHECK(std::vector<std::size_t>(h.shape().begin() + 1, h.shape().end()) == spec.output_shape);
  }
  CHECK(h.shape() == std::vector<std::size_t>{1, 168, 4, 4});
}

TEST_CASE("forward passes are deterministic and batch-independent at inference") {
  const ArchSpec spec{4, {1, 2}, 1, 16};
  ResNet<float> a(spec, 21), b(spec, 21), c(spec, 22);
  std::mt19937_64 rng(10);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  Tensor<float> x({3, 1, 16, 16});
  for (auto& v : x.data()) v = dist(rng);
  const auto ya = a.forward(x, Mode::kInfer);
  CHECK(ya == b.forward(x, Mode::kInfer));
  CHECK_FALSE(ya == c.forward(x, Mode::kInfer));
  for (std::size_t n = 0; n < 3; ++n) {
    Tensor<float> one({1, 1, 16, 16});
    std::copy_n(x.ptr() + n * 256, 256, one.ptr());
    CHECK(a.forward(one, Mode::kInfer)[0] == ya[n]);
  }
}

TEST_CASE("checkpoint round trip and architecture json") {
  const ArchSpec spec{3, {1, 2}, 1, 8};
  ResNet<float> model(spec, 5);
  std::mt19937_64 rng(13);
  Tensor<float> x({4, 1, 8, 8});
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : x.data()) v = dist(rng);
  model.forward(x, Mode::kTrain);  // moves running statistics off their defaults

  const std::string bytes = encode_checkpoint(model);
  CHECK(bytes.substr(0, 4) == "CNNW");
  ResNet<float> restored(spec, 99);
  decode_checkpoint(bytes, restored);
  CHECK(restored.forward(x, Mode::kInfer) == model.forward(x, Mode::kInfer));
  CHECK(encode_checkpoint(restored) == bytes);

  ResNet<float> other(ArchSpec{4, {1, 2}, 1, 8}, 5);
  CHECK_THROWS_AS(decode_checkpoint(bytes, other), IoError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3), restored), IoError);

  const std::string json = architecture_json(model);
  const ArchSpec parsed = arch_spec_from_json(json);
  CHECK(parsed.base_width == 3);
  CHECK(parsed.stage_multipliers == spec.stage_multipliers);
  CHECK(json.find("\"param_count\": " + std::to_string(model.param_count())) != std::string::npos);
  CHECK_THROWS_AS(arch_spec_from_json("{\"base_width\": 0, \"stage_multipliers\": [1], \"blocks_per_stage\": 1}"),
                  ConfigError);
  CHECK_THROWS_AS(arch_spec_from_json("not json"), ConfigError);
}
