#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "corrpost/imagefft/fft.hpp"
#include "test_util.hpp"

using namespace corrpost;
using corrpost::testing::max_abs;
using corrpost::testing::max_abs_diff;
using corrpost::testing::random_image;

namespace {

// Direct double-loop DFT, X(u,v) = sum x(r,c) exp(-2 pi i (u r / H + v c / W)).
Spectrum2D brute_force_dft(const Image2D& img) {
  const std::size_t w = img.width();
  const std::size_t h = img.height();
  Spectrum2D out(w, h);
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      std::complex<double> acc = 0.0;
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          const double angle = -2.0 * std::numbers::pi *
                               (static_cast<double>(u * r) / static_cast<double>(h) +
                                static_cast<double>(v * c) / static_cast<double>(w));
          acc += img(r, c) * std::complex<double>(std::cos(angle), std::sin(angle));
        }
      }
      out(u, v) = acc;
    }
  }
  return out;
}

Image2D shifted(const Image2D& img, std::size_t dy, std::size_t dx) {
  Image2D out(img.width(), img.height());
  for (std::size_t r = 0; r < img.height(); ++r) {
    for (std::size_t c = 0; c < img.width(); ++c) {
      out((r + dy) % img.height(), (c + dx) % img.width()) = img(r, c);
    }
  }
  return out;
}

double relative_error(const ResponseMap& got, const ResponseMap& want) {
  const double scale = std::max(max_abs(want), 1e-300);
  return max_abs_diff(got, want) / scale;
}

}  // namespace

TEST_CASE("fft2 of a constant image has only a DC term") {
  const Image2D ones(8, 8, 1.0);
  const auto spec = fft2(ones);
  CHECK(spec(0, 0).real() == doctest::Approx(64.0));
  CHECK(std::abs(spec(0, 0).imag()) < 1e-12);
  for (std::size_t i = 1; i < spec.size(); ++i) CHECK(std::abs(spec.data()[i]) < 1e-12);
}

TEST_CASE("fft2 of a delta is flat") {
  Image2D delta(8, 8, 0.0);
  delta(0, 0) = 1.0;
  const auto spec = fft2(delta);
  for (const auto& v : spec.data()) {
    CHECK(v.real() == doctest::Approx(1.0));
    CHECK(std::abs(v.imag()) < 1e-12);
  }
}

TEST_CASE("fft2 matches the brute-force DFT") {
  std::mt19937_64 rng(11);
  const auto img = random_image(16, rng);
  const auto fast = fft2(img);
  const auto slow = brute_force_dft(img);
  CHECK(max_abs_diff(fast, slow) / max_abs(slow) < 1e-6);
}

TEST_CASE("non power-of-two sides are rejected") {
  CHECK_THROWS_AS(fft2(Image2D(6, 8)), SizeError);
  CHECK_THROWS_AS(ifft2(Spectrum2D(8, 12)), SizeError);
  std::vector<std::complex<double>> v(3);
  CHECK_THROWS_AS(fft1d(v, FftDirection::kForward), SizeError);
}

TEST_CASE("ifft2 inverts fft2") {
  std::mt19937_64 rng(5);
  const auto img = random_image(8, rng);
  const auto back = ifft2(fft2(img));
  double err = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) err = std::max(err, std::abs(back.data()[i] - img.data()[i]));
  CHECK(err < 1e-6);
}

TEST_CASE("ifft2 of a flat spectrum is a unit delta") {
  const Spectrum2D flat(8, 8, std::complex<double>(1.0, 0.0));
  const auto out = ifft2(flat);
  CHECK(out(0, 0).real() == doctest::Approx(1.0));
  for (std::size_t i = 1; i < out.size(); ++i) CHECK(std::abs(out.data()[i]) < 1e-12);
}

TEST_CASE("ifft2 is linear") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  Spectrum2D x(8, 8), y(8, 8), combo(8, 8);
  const std::complex<double> a(0.7, -1.3), b(-2.1, 0.4);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x.data()[i] = {n(rng), n(rng)};
    y.data()[i] = {n(rng), n(rng)};
    combo.data()[i] = a * x.data()[i] + b * y.data()[i];
  }
  const auto lhs = ifft2(combo);
  const auto ix = ifft2(x);
  const auto iy = ifft2(y);
  Spectrum2D rhs(8, 8);
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs.data()[i] = a * ix.data()[i] + b * iy.data()[i];
  CHECK(max_abs_diff(lhs, rhs) < 1e-12 * std::max(1.0, max_abs(rhs)) * 100);
}

TEST_CASE("round trip and Parseval hold for every supported size") {
  std::mt19937_64 rng(1234);
  for (std::size_t side : {1u, 2u, 4u, 8u, 16u, 32u, 64u, 128u, 256u}) {
    for (int rep = 0; rep < 3; ++rep) {
      const auto img = random_image(side, rng);
      const auto spec = fft2(img);
      const auto back = ifft2(spec);
      double err = 0.0;
      for (std::size_t i = 0; i < img.size(); ++i) err = std::max(err, std::abs(back.data()[i] - img.data()[i]));
      CHECK(err < 1e-5);

      double spatial = 0.0;
      double spectral = 0.0;
      for (double v : img.data()) spatial += v * v;
      for (const auto& v : spec.data()) spectral += std::norm(v);
      spectral /= static_cast<double>(img.size());
      CHECK(std::abs(spatial - spectral) / spatial < 1e-5);
    }
  }
}

TEST_CASE("delta scene with an all-pass filter gives a unit delta") {
  Image2D scene(8, 8, 0.0);
  scene(0, 0) = 1.0;
  const Spectrum2D all_pass(8, 8, std::complex<double>(1.0, 0.0));
  const auto r = cross_correlate(scene, all_pass);
  CHECK(r(0, 0) == doctest::Approx(1.0));
  for (std::size_t i = 1; i < r.size(); ++i) CHECK(r.data()[i] < 1e-12);
}

TEST_CASE("matched filter peaks at the origin with the scene energy") {
  std::mt19937_64 rng(77);
  const auto scene = random_image(16, rng);
  const auto r = cross_correlate(scene, fft2(scene));
  double energy = 0.0;
  for (double v : scene.data()) energy += v * v;
  CHECK(r(0, 0) == doctest::Approx(energy).epsilon(1e-9));
  for (double v : r.data()) CHECK(v <= r(0, 0) + 1e-9);
  CHECK(relative_error(r, spatial_correlate_oracle(scene, scene)) < 1e-5);
}

TEST_CASE("a circular shift of (dy, dx) moves the peak to (-dy, -dx)") {
  std::mt19937_64 rng(3);
  const std::size_t n = 16;
  const auto templ = random_image(n, rng);
  const auto filter = fft2(templ);
  for (std::size_t dy = 0; dy < n; dy += 3) {
    for (std::size_t dx = 0; dx < n; dx += 5) {
      const auto scene = shifted(templ, dy, dx);
      const auto r = cross_correlate(scene, filter);
      std::size_t best = 0;
      for (std::size_t i = 1; i < r.size(); ++i) {
        if (r.data()[i] > r.data()[best]) best = i;
      }
      CHECK(best / n == (n - dy) % n);
      CHECK(best % n == (n - dx) % n);
      CHECK(relative_error(r, spatial_correlate_oracle(scene, templ)) < 1e-5);
    }
  }
}

TEST_CASE("spatial oracle basics") {
  std::mt19937_64 rng(8);
  const auto scene = random_image(8, rng);
  const auto zero = spatial_correlate_oracle(scene, Image2D(8, 8, 0.0));
  for (double v : zero.data()) CHECK(v == 0.0);

  const auto auto_corr = spatial_correlate_oracle(scene, scene);
  double energy = 0.0;
  for (double v : scene.data()) energy += v * v;
  CHECK(auto_corr(0, 0) == doctest::Approx(energy));

  const auto other = random_image(8, rng);
  CHECK(relative_error(cross_correlate(scene, fft2(other)), spatial_correlate_oracle(scene, other)) < 1e-5);
  CHECK_THROWS_AS(spatial_correlate_oracle(scene, Image2D(4, 4)), DimensionError);
}

TEST_CASE("cross_correlate rejects mismatched shapes") {
  CHECK_THROWS_AS(cross_correlate(Image2D(8, 8), Spectrum2D(16, 16)), DimensionError);
}

TEST_CASE("property: FFT correlation equals the spatial oracle and scales linearly") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t side = std::size_t{1} << (trial % 5);
    const auto scene = random_image(side, rng);
    const auto templ = random_image(side, rng);
    const auto filter = fft2(templ);
    const auto r = cross_correlate(scene, filter);
    CHECK(relative_error(r, spatial_correlate_oracle(scene, templ)) < 1e-5);

    const double a = scale(rng);
    Image2D scaled = scene;
    for (auto& v : scaled.data()) v *= a;
    const auto ra = cross_correlate(scaled, filter);
    for (std::size_t i = 0; i < r.size(); ++i) {
      CHECK(ra.data()[i] == doctest::Approx(a * r.data()[i]).epsilon(1e-9).scale(max_abs(r)));
    }
  }
}

TEST_CASE("center_zero_lag moves the origin to the frame center") {
  ResponseMap r(8, 8, 0.0);
  r(0, 0) = 5.0;
  r(7, 1) = 2.0;
  const auto c = center_zero_lag(r);
  CHECK(c(4, 4) == 5.0);
  CHECK(c(3, 5) == 2.0);
}

TEST_CASE("PGM and IMG2 files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "corrpost_test_imagefft";
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(1);
  const auto img = random_image(16, rng);

  write_pgm(dir / "a16.pgm", img, 65535);
  const auto back16 = read_pgm(dir / "a16.pgm");
  CHECK(back16.width() == 16);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(back16.data()[i] - img.data()[i]) <= 0.5 / 65535 + 1e-12);

  write_pgm(dir / "a8.pgm", img, 255);
  const auto back8 = read_pgm(dir / "a8.pgm");
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(back8.data()[i] - img.data()[i]) <= 0.5 / 255 + 1e-12);

  write_img2(dir / "a.img2", img);
  const auto backf = read_img2(dir / "a.img2");
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(backf.data()[i] == static_cast<float>(img.data()[i]));

  using namespace std::string_literals;
  const std::string commented = "P5\n# comment\n2 1\n255\n\x00\xff"s;
  const auto parsed = decode_pgm(std::span<const char>(commented.data(), commented.size()));
  CHECK(parsed(0, 0) == 0.0);
  CHECK(parsed(0, 1) == 1.0);
  const std::string bad = "P2\n1 1\n255\n0";
  CHECK_THROWS_AS(decode_pgm(std::span<const char>(bad.data(), bad.size())), IoError);
}
