#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "corrpost/common/errors.hpp"

namespace corrpost {

/// Row-major 2D raster.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(std::size_t width, std::size_t height, T fill = T{})
      : width_(width), height_(height), data_(width * height, fill) {}
  Grid(std::size_t width, std::size_t height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != width_ * height_) {
      throw DimensionError("grid data length " + std::to_string(data_.size()) + " != " + std::to_string(width_) +
                           "x" + std::to_string(height_));
    }
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t row, std::size_t col) { return data_[row * width_ + col]; }
  const T& operator()(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::span<T> row(std::size_t r) noexcept { return std::span<T>(data_).subspan(r * width_, width_); }
  std::span<const T> row(std::size_t r) const noexcept {
    return std::span<const T>(data_).subspan(r * width_, width_);
  }

  bool same_shape(const auto& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<T> data_;
};

/// Grayscale raster with samples nominally in [0,1].
class Image2D : public Grid<double> {
 public:
  using Grid<double>::Grid;
};

/// Complex frequency-domain array; bin (0,0) is DC.
class Spectrum2D : public Grid<std::complex<double>> {
 public:
  using Grid<std::complex<double>>::Grid;
};

/// Magnitude of a correlation output. Zero lag sits at (0,0).
class ResponseMap : public Grid<double> {
 public:
  using Grid<double>::Grid;
};

constexpr bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

/// Binary PGM (P5). Reading accepts maxval 255 or 65535 and scales to [0,1].
Image2D read_pgm(const std::filesystem::path& path);
/// Writes P5 with the given maxval (255 or 65535); samples are clamped to [0,1].
void write_pgm(const std::filesystem::path& path, const Image2D& img, unsigned maxval = 65535);
std::string encode_pgm(const Image2D& img, unsigned maxval = 65535);
Image2D decode_pgm(std::span<const char> bytes);

/// "IMG2" float plane: magic, u32 width, u32 height, u32 reserved, f32 samples.
void write_img2(const std::filesystem::path& path, const Grid<double>& plane);
Image2D read_img2(const std::filesystem::path& path);

}  // namespace corrpost
