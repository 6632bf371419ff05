#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "corrpost/common/sha256.hpp"
#include "corrpost/imagefft/image.hpp"

namespace corrpost {

enum class FilterKind : std::uint8_t { kOtMach = 0, kMinace = 1 };

std::string_view to_string(FilterKind kind);
FilterKind filter_kind_from_string(std::string_view name);

/// True-class training images plus the origin response each should produce.
struct TrainingSet {
  std::vector<Image2D> images;
  /// Per-image constraint values u_i; empty means 1.0 for every image.
  std::vector<double> labels;

  std::size_t size() const noexcept { return images.size(); }
  double label(std::size_t i) const { return labels.empty() ? 1.0 : labels.at(i); }
  /// Throws InputError on an empty set, DimensionError on mixed shapes and
  /// ParameterError on non-finite or miscounted labels.
  void validate() const;
};

/// Synthesis parameters. Unused slots stay zero so the file format has a
/// fixed layout.
struct FilterParams {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double noise_c = 0.0;

  friend bool operator==(const FilterParams&, const FilterParams&) = default;
};

struct CorrelationFilter {
  FilterKind kind = FilterKind::kOtMach;
  Spectrum2D H;
  FilterParams params;
  Digest training_digest{};

  std::size_t width() const noexcept { return H.width(); }
  std::size_t height() const noexcept { return H.height(); }
};

inline constexpr double kOtMachDenominatorFloor = 1e-12;
inline constexpr double kMinaceMaxCondition = 1e12;

/// Pipeline defaults.
inline constexpr double kDefaultOtMachAlpha = 0.01;
inline constexpr double kDefaultOtMachBeta = 1.0;
inline constexpr double kDefaultOtMachGamma = 0.1;
inline constexpr double kDefaultMinaceNoiseFraction = 1e-6;

/// Per-frequency optimal-tradeoff MACH filter
///   H = m / (alpha*C + beta*D + gamma*S),  C = 1,
/// with m the mean training spectrum, D the mean power spectrum and S the
/// spectral variance about m. Denominators are floored at 1e-12; a
/// denominator that is below the floor at every frequency is degenerate.
CorrelationFilter synthesize_otmach(const TrainingSet& ts, double alpha, double beta, double gamma);

/// Constrained minimum-energy filter H = T^-1 X a with (X^H T^-1 X) a = W*H*u,
/// where T(f) = max(max_i |X_i(f)|^2, noise_c). Each training image then
/// correlates to exactly u_i at zero lag.
CorrelationFilter synthesize_minace(const TrainingSet& ts, double noise_c);

/// fraction * max over frequencies of the spectral envelope max_i |X_i|^2.
double default_minace_noise(const TrainingSet& ts, double fraction = kDefaultMinaceNoiseFraction);

/// SHA-256 of the ordered images (shape + f64 samples) and labels.
Digest filter_digest(const TrainingSet& ts);

ResponseMap cross_correlate(const Image2D& scene, const CorrelationFilter& filter);

/// "CFLT" file: u16 version, u8 kind, u32 width, u32 height, f64 alpha, beta,
/// gamma, noise_c, 32-byte digest, then complex64 (re, im) pairs row-major.
std::string encode_filter(const CorrelationFilter& filter);
CorrelationFilter decode_filter(std::string_view bytes);
void write_filter(const std::filesystem::path& path, const CorrelationFilter& filter);
CorrelationFilter read_filter(const std::filesystem::path& path);

}  // namespace corrpost
