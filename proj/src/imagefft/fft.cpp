#include "corrpost/imagefft/fft.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace corrpost {
namespace {

using cplx = std::complex<double>;

void require_pow2(std::size_t width, std::size_t height, const char* op) {
  if (!is_power_of_two(width) || !is_power_of_two(height)) {
    throw SizeError(std::string(op) + ": sides must be powers of two, got " + std::to_string(width) + "x" +
                    std::to_string(height));
  }
}

/// exp(-+2*pi*i*k/n) for k < n/2.
std::vector<cplx> twiddles(std::size_t n, FftDirection dir) {
  std::vector<cplx> w(n / 2);
  const double sign = dir == FftDirection::kForward ? -1.0 : 1.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    w[k] = {std::cos(angle), std::sin(angle)};
  }
  return w;
}

std::size_t reverse_bits(std::size_t i, unsigned bits) {
  std::size_t r = 0;
  for (unsigned b = 0; b < bits; ++b) {
    r = (r << 1) | (i & 1u);
    i >>= 1;
  }
  return r;
}

unsigned log2_exact(std::size_t n) {
  unsigned bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  return bits;
}

void fft_with_table(std::span<cplx> a, std::span<const cplx> w) {
  const std::size_t n = a.size();
  const unsigned bits = log2_exact(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = reverse_bits(i, bits);
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const cplx t = a[start + k + half] * w[k * stride];
        const cplx u = a[start + k];
        a[start + k] = u + t;
        a[start + k + half] = u - t;
      }
    }
  }
}

/// Column transforms applied as butterflies over whole rows, so every inner
/// loop walks contiguous memory.
void fft_columns(Grid<cplx>& g, std::span<const cplx> w) {
  const std::size_t rows = g.height();
  const std::size_t cols = g.width();
  const unsigned bits = log2_exact(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t j = reverse_bits(i, bits);
    if (i < j) {
      auto ri = g.row(i);
      auto rj = g.row(j);
      std::swap_ranges(ri.begin(), ri.end(), rj.begin());
    }
  }
  for (std::size_t len = 2; len <= rows; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = rows / len;
    for (std::size_t start = 0; start < rows; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const cplx tw = w[k * stride];
        cplx* top = g.row(start + k).data();
        cplx* bottom = g.row(start + k + half).data();
        for (std::size_t c = 0; c < cols; ++c) {
          const cplx t = bottom[c] * tw;
          const cplx u = top[c];
          top[c] = u + t;
          bottom[c] = u - t;
        }
      }
    }
  }
}

void transform2d(Grid<cplx>& g, FftDirection dir) {
  const auto wr = twiddles(g.width(), dir);
  for (std::size_t r = 0; r < g.height(); ++r) fft_with_table(g.row(r), wr);
  if (g.height() > 1) {
    const auto wc = g.height() == g.width() ? wr : twiddles(g.height(), dir);
    fft_columns(g, wc);
  }
}

}  // namespace

void fft1d(std::span<cplx> data, FftDirection dir) {
  if (!is_power_of_two(data.size())) {
    throw SizeError("fft1d: length must be a power of two, got " + std::to_string(data.size()));
  }
  const auto w = twiddles(data.size(), dir);
  fft_with_table(data, w);
}

Spectrum2D fft2(const Image2D& img) {
  require_pow2(img.width(), img.height(), "fft2");
  Spectrum2D out(img.width(), img.height());
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i];
  transform2d(out, FftDirection::kForward);
  return out;
}

Spectrum2D fft2(const Spectrum2D& spec) {
  require_pow2(spec.width(), spec.height(), "fft2");
  Spectrum2D out = spec;
  transform2d(out, FftDirection::kForward);
  return out;
}

Spectrum2D ifft2(const Spectrum2D& spec) {
  require_pow2(spec.width(), spec.height(), "ifft2");
  Spectrum2D out = spec;
  transform2d(out, FftDirection::kInverse);
  const double scale = 1.0 / static_cast<double>(out.size());
  for (auto& v : out.data()) v *= scale;
  return out;
}

ResponseMap cross_correlate(const Image2D& scene, const Spectrum2D& filter) {
  if (!scene.same_shape(filter)) {
    throw DimensionError("cross_correlate: scene " + std::to_string(scene.width()) + "x" +
                         std::to_string(scene.height()) + " vs filter " + std::to_string(filter.width()) + "x" +
                         std::to_string(filter.height()));
  }
  Spectrum2D product = fft2(scene);
  auto p = product.data();
  auto h = filter.data();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::conj(p[i]) * h[i];
  const Spectrum2D spatial = ifft2(product);
  ResponseMap out(scene.width(), scene.height());
  auto s = spatial.data();
  auto o = out.data();
  for (std::size_t i = 0; i < s.size(); ++i) o[i] = std::abs(s[i]);
  return out;
}

ResponseMap spatial_correlate_oracle(const Image2D& scene, const Image2D& templ) {
  if (!scene.same_shape(templ)) throw DimensionError("spatial_correlate_oracle: shape mismatch");
  const std::size_t w = scene.width();
  const std::size_t h = scene.height();
  ResponseMap out(w, h);
  for (std::size_t ty = 0; ty < h; ++ty) {
    for (std::size_t tx = 0; tx < w; ++tx) {
      double acc = 0.0;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) acc += scene(y, x) * templ((y + ty) % h, (x + tx) % w);
      }
      out(ty, tx) = std::abs(acc);
    }
  }
  return out;
}

ResponseMap center_zero_lag(const ResponseMap& map) {
  const std::size_t w = map.width();
  const std::size_t h = map.height();
  ResponseMap out(w, h);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) out((r + h / 2) % h, (c + w / 2) % w) = map(r, c);
  }
  return out;
}

}  // namespace corrpost
