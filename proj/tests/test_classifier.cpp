#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "corrpost/classifier/classifier.hpp"

using namespace corrpost;
using namespace corrpost::classifier;

namespace {

ResponsePatch random_patch(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ResponsePatch p;
  for (auto& v : p.data) v = u(rng);
  return p;
}

// Centered Gaussian bump over faint noise vs flat noise.
LabeledPatches sanity_dataset(std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LabeledPatches data;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const bool is_true = i % 2 == 0;
    ResponsePatch p;
    const double width = 1.5 + 1.5 * u(rng);
    for (std::size_t r = 0; r < kPatchSide; ++r) {
      for (std::size_t c = 0; c < kPatchSide; ++c) {
        double v = 0.3 * u(rng);
        if (is_true) {
          const double d2 = std::pow(r - 15.5, 2) + std::pow(c - 15.5, 2);
          v += std::exp(-d2 / (2 * width * width));
        }
        p.at(r, c) = static_cast<float>(v);
      }
    }
    float lo = p.data[0], hi = p.data[0];
    for (float v : p.data) lo = std::min(lo, v), hi = std::max(hi, v);
    for (auto& v : p.data) v = (v - lo) / (hi - lo);
    data.add(p, is_true);
  }
  return data;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  cfg.seed = 7;
  cfg.arch = nn::ArchSpec{8, {1, 2}, 1, 32};
  return cfg;
}

}  // namespace

TEST_CASE("augment: disabled config is the identity") {
  std::mt19937_64 rng(1);
  const ResponsePatch p = random_patch(rng);
  const AugmentConfig off{0.0, 0.0, 0.0, 0.0};
  for (int i = 0; i < 10; ++i) CHECK(augment(p, off, rng) == p);
}

TEST_CASE("augment: flips are involutions and mirror the right axis") {
  std::mt19937_64 rng(2);
  const ResponsePatch p = random_patch(rng);
  CHECK(hflip(hflip(p)) == p);
  CHECK(vflip(vflip(p)) == p);
  CHECK(hflip(p).at(3, 0) == p.at(3, 31));
  CHECK(vflip(p).at(0, 5) == p.at(31, 5));
  const AugmentConfig forced{1.0, 0.0, 0.0, 0.0};
  CHECK(augment(augment(p, forced, rng), forced, rng) == p);
}

TEST_CASE("augment: rotation coordinate oracle") {
  ResponsePatch p;
  p.at(8, 16) = 1.0f;
  const ResponsePatch r = rotate(p, 90.0);
  // Counter-clockwise about (15.5, 15.5): offset (dy, dx) -> (-dx, dy).
  const double dy = 8 - 15.5, dx = 16 - 15.5;
  const auto row = static_cast<std::size_t>(15.5 - dx);
  const auto col = static_cast<std::size_t>(15.5 + dy);
  CHECK(row == 15);
  CHECK(col == 8);
  CHECK(std::abs(r.at(row, col) - 1.0f) < 1e-4);
  double rest = 0.0;
  for (std::size_t i = 0; i < kPatchSize; ++i) rest += i == row * kPatchSide + col ? 0.0 : std::abs(r.data[i]);
  CHECK(rest < 1e-4);

  // Four quarter turns return home; half-integer sampling keeps mass inside.
  ResponsePatch q = p;
  for (int k = 0; k < 4; ++k) q = rotate(q, 90.0);
  CHECK(std::abs(q.at(8, 16) - 1.0f) < 1e-4);
  CHECK(rotate(p, 0.0) == p);
}

TEST_CASE("augment: general rotation matches a direct bilinear oracle") {
  std::mt19937_64 rng(3);
  const ResponsePatch p = random_patch(rng);
  const double deg = 37.0;
  const ResponsePatch r = rotate(p, deg);
  const double t = deg * std::numbers::pi / 180.0;
  double worst = 0.0;
  for (std::size_t row = 0; row < kPatchSide; ++row) {
    for (std::size_t col = 0; col < kPatchSide; ++col) {
      // Source point: rotate the output offset clockwise.
      const double x = col - 15.5, y = 15.5 - row;
      const double sx = x * std::cos(t) + y * std::sin(t);
      const double sy = -x * std::sin(t) + y * std::cos(t);
      const double srow = 15.5 - sy, scol = 15.5 + sx;
      double v = 0.0;
      for (long rr = static_cast<long>(std::floor(srow)); rr <= static_cast<long>(std::floor(srow)) + 1; ++rr)
        for (long cc = static_cast<long>(std::floor(scol)); cc <= static_cast<long>(std::floor(scol)) + 1; ++cc) {
          if (rr < 0 || cc < 0 || rr > 31 || cc > 31) continue;
          v += (1 - std::abs(srow - rr)) * (1 - std::abs(scol - cc)) * p.at(rr, cc);
        }
      worst = std::max(worst, std::abs(v - r.at(row, col)));
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("augment property: output stays in [0,1] and keeps metadata") {
  std::mt19937_64 rng(4);
  const AugmentConfig strong{0.5, 0.5, 180.0, 0.5};
  for (int trial = 0; trial < 200; ++trial) {
    ResponsePatch p = random_patch(rng);
    p.source_resolution = 64;
    p.crop_mode = CropMode::kPeak;
    const ResponsePatch a = augment(p, strong, rng);
    CHECK(a.source_resolution == 64);
    CHECK(a.crop_mode == CropMode::kPeak);
    for (float v : a.data) {
      REQUIRE(v >= 0.0f);
      REQUIRE(v <= 1.0f);
    }
  }
  CHECK_THROWS_AS((AugmentConfig{1.5, 0.0, 0.0, 0.0}.validate()), ParameterError);
  CHECK_THROWS_AS((AugmentConfig{0.0, 0.0, 200.0, 0.0}.validate()), ParameterError);
  CHECK_THROWS_AS((AugmentConfig{0.0, 0.0, 0.0, -1.0}.validate()), ParameterError);
}

TEST_CASE("model contract: zeros input, zeroed head, uninitialized statistics") {
  Model model(nn::ArchSpec{}, 1);
  const double s = score(model, ResponsePatch{});
  CHECK(std::isfinite(s));
  CHECK(s > 0.0);
  CHECK(s < 1.0);
  CHECK(model.param_count() >= 1000000);
  CHECK(model.param_count() <= 1400000);

  Model small(nn::ArchSpec{2, {1, 2, 4, 8}, 2, 32}, 1);
  // Hand count for width 2: BN(2) + stem 18 + BN 4, stage widths 2,4,8,16.
  const std::size_t stage1 = 2 * (36 + 4 + 36 + 4);
  const std::size_t stage2 = (72 + 8 + 144 + 8 + 8 + 8) + (144 + 8 + 144 + 8);
  const std::size_t stage3 = (288 + 16 + 576 + 16 + 32 + 16) + (576 + 16 + 576 + 16);
  const std::size_t stage4 = (1152 + 32 + 2304 + 32 + 128 + 32) + (2304 + 32 + 2304 + 32);
  CHECK(small.param_count() == 2 + 18 + 4 + stage1 + stage2 + stage3 + stage4 + 17);

  small.head().weight().value.fill(0.0f);
  small.head().bias().value.fill(0.0f);
  std::mt19937_64 rng(5);
  const ResponsePatch p = random_patch(rng);
  CHECK(predict(small, p).score == 0.5);
  CHECK(predict(small, p).is_true);
  CHECK(predict(small, p, 0.6).is_true == false);

  small.input_bn().running_var().value.fill(std::nanf(""));
  CHECK_THROWS_AS(score(small, p), StateError);
}

TEST_CASE("inference is deterministic and independent of batch composition") {
  Model model(nn::ArchSpec{4, {1, 2}, 1, 32}, 3);
  std::mt19937_64 rng(6);
  std::vector<ResponsePatch> patches;
  for (int i = 0; i < 70; ++i) patches.push_back(random_patch(rng));
  const auto batched = scores(model, patches);
  for (std::size_t i = 0; i < patches.size(); i += 7) {
    CHECK(score(model, patches[i]) == batched[i]);
    CHECK(score(model, patches[i]) == score(model, patches[i]));
  }
}

TEST_CASE("training on a separable sanity set") {
  const LabeledPatches data = sanity_dataset(200, 11);
  const TrainConfig cfg = small_config();
  TrainedModel run = train(data, cfg);
  const auto& rep = run.report;
  REQUIRE(rep.epochs.size() == 5);
  for (std::size_t e = 1; e < 3; ++e) CHECK(rep.epochs[e].loss < rep.epochs[e - 1].loss);
  CHECK(rep.val_true + rep.train_true == 200);
  CHECK(rep.val_true == 20);
  CHECK(rep.val_false == 20);

  const LabeledPatches held_out = sanity_dataset(100, 99);
  CHECK(accuracy(run.model, held_out) >= 0.99);
  CHECK(predict(run.model, held_out.patches[0]).score > 0.9);

  SUBCASE("same seed reproduces every byte") {
    TrainedModel again = train(data, cfg);
    CHECK(again.report.epochs.back().loss == rep.epochs.back().loss);
    CHECK(nn::encode_checkpoint(again.model) == nn::encode_checkpoint(run.model));
    CHECK(again.report.to_json() == rep.to_json());
  }
  SUBCASE("validation split is disjoint and stratified") {
    std::size_t val_true = 0;
    for (std::size_t i = 1; i < rep.val_indices.size(); ++i) CHECK(rep.val_indices[i - 1] < rep.val_indices[i]);
    for (auto i : rep.val_indices) val_true += data.labels[i];
    CHECK(val_true == rep.val_true);
    CHECK(rep.val_indices.size() == rep.val_true + rep.val_false);
  }
}

TEST_CASE("training errors") {
  LabeledPatches one_class = sanity_dataset(10, 1);
  for (auto& l : one_class.labels) l = 1;
  CHECK_THROWS_AS(train(one_class, small_config()), InputError);

  LabeledPatches poisoned = sanity_dataset(10, 2);
  poisoned.patches[3].at(16, 16) = std::nanf("");
  TrainConfig cfg = small_config();
  cfg.val_fraction = 0.0;
  try {
    train(poisoned, cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.epoch() == 1);
  }

  cfg.batch_size = 1;
  CHECK_THROWS_AS(train(sanity_dataset(4, 3), cfg), ParameterError);
}

TEST_CASE("train config json round trip") {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 42;
  cfg.augment.rot_max_deg = 45.0;
  cfg.arch.base_width = 8;
  nlohmann::ordered_json j;
  to_json(j, cfg);
  const TrainConfig back = train_config_from_json(nlohmann::json::parse(j.dump()));
  nlohmann::ordered_json j2;
  to_json(j2, back);
  CHECK(j.dump() == j2.dump());
  CHECK(back.arch.base_width == 8);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json::parse(R"({"epoch": 3})")), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json::parse(R"({"epochs": 0})")), ParameterError);
}
