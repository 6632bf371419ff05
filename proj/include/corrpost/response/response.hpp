#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "corrpost/imagefft/image.hpp"

namespace corrpost {

inline constexpr std::size_t kPatchSide = 32;
inline constexpr std::size_t kPatchSize = kPatchSide * kPatchSide;

enum class CropMode : std::uint8_t { kCenter = 0, kPeak = 1 };

std::string_view to_string(CropMode mode);
CropMode crop_mode_from_string(std::string_view name);

struct PeakLocation {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const PeakLocation&, const PeakLocation&) = default;
};

struct MetricScores {
  double peak_height = 0.0;
  double pce = 0.0;
  PeakLocation peak_location;
};

/// Unnormalized 32x32 window cut from a response.
class RawPatch : public Grid<double> {
 public:
  RawPatch() : Grid<double>(kPatchSide, kPatchSide) {}
};

/// 32x32 window min-max normalized to [0,1]; all zeros if the window was constant.
struct ResponsePatch {
  std::array<float, kPatchSize> data{};
  std::uint32_t source_resolution = 0;
  CropMode crop_mode = CropMode::kCenter;

  float& at(std::size_t row, std::size_t col) { return data[row * kPatchSide + col]; }
  float at(std::size_t row, std::size_t col) const { return data[row * kPatchSide + col]; }
  friend bool operator==(const ResponsePatch&, const ResponsePatch&) = default;
};

/// Location of the maximum; ties go to the smallest (row, col).
PeakLocation peak_location(const ResponseMap& r);
double peak_height(const ResponseMap& r);

/// peak^2 / sum r^2. Throws UndefinedMetricError on an all-zero map.
double pce(const ResponseMap& r);

MetricScores score(const ResponseMap& r);

/// CENTER: rows/cols [W/2-16, W/2+16). PEAK: 32x32 window with the peak at
/// (16,16), wrapping circularly at the borders. Maps smaller than 32x32 are
/// a SizeError.
RawPatch crop(const ResponseMap& r, CropMode mode);

/// (x - min) / (max - min); a constant patch maps to all zeros.
ResponsePatch normalize01(const RawPatch& raw, std::uint32_t source_resolution = kPatchSide,
                          CropMode mode = CropMode::kCenter);

/// Correlation output (zero lag at (0,0)) to network input. Zero lag is
/// moved to the frame center first, so CENTER crops the lags [-16, 16).
ResponsePatch make_patch(const ResponseMap& r, CropMode mode);

/// "PT32" file: magic, u32 source_resolution, u8 crop_mode, 1024 f32 samples.
std::string encode_patch(const ResponsePatch& p);
ResponsePatch decode_patch(std::string_view bytes);
void write_patch(const std::filesystem::path& path, const ResponsePatch& p);
ResponsePatch read_patch(const std::filesystem::path& path);

/// One row of a metric report.
struct MetricRow {
  std::string sample_id;
  std::string set_id;
  int label = 0;
  double peak = 0.0;
  double pce = 0.0;
  std::size_t peak_row = 0;
  std::size_t peak_col = 0;
};

/// CSV with header sample_id,set_id,label,peak,pce,peak_row,peak_col; reals
/// are written with 17 significant digits so the file round-trips exactly.
std::string encode_metrics_csv(const std::vector<MetricRow>& rows);
std::vector<MetricRow> decode_metrics_csv(std::string_view text);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

}  // namespace corrpost
