#include "corrpost/response/response.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "corrpost/common/binary_io.hpp"
#include "corrpost/common/csv.hpp"
#include "corrpost/imagefft/fft.hpp"

namespace corrpost {

std::string_view to_string(CropMode mode) { return mode == CropMode::kCenter ? "center" : "peak"; }

CropMode crop_mode_from_string(std::string_view name) {
  if (name == "center") return CropMode::kCenter;
  if (name == "peak") return CropMode::kPeak;
  throw ConfigError("unknown crop mode '" + std::string(name) + "'");
}

PeakLocation peak_location(const ResponseMap& r) {
  if (r.empty()) throw InputError("peak_location: empty response");
  const auto data = r.data();
  std::size_t best = 0;
  for (std::size_t i = 1; i < data.size(); ++i) {
    if (data[i] > data[best]) best = i;
  }
  return {best / r.width(), best % r.width()};
}

double peak_height(const ResponseMap& r) {
  const auto loc = peak_location(r);
  return r(loc.row, loc.col);
}

double pce(const ResponseMap& r) {
  const double peak = peak_height(r);
  double energy = 0.0;
  for (double v : r.data()) energy += v * v;
  if (!(energy > 0.0)) throw UndefinedMetricError("pce: response is identically zero");
  return peak * peak / energy;
}

MetricScores score(const ResponseMap& r) {
  MetricScores s;
  s.peak_location = peak_location(r);
  s.peak_height = r(s.peak_location.row, s.peak_location.col);
  s.pce = pce(r);
  return s;
}

RawPatch crop(const ResponseMap& r, CropMode mode) {
  if (r.width() < kPatchSide || r.height() < kPatchSide) {
    throw SizeError("crop: response " + std::to_string(r.width()) + "x" + std::to_string(r.height()) +
                    " is smaller than 32x32");
  }
  RawPatch out;
  constexpr std::size_t half = kPatchSide / 2;
  if (mode == CropMode::kCenter) {
    const std::size_t r0 = r.height() / 2 - half;
    const std::size_t c0 = r.width() / 2 - half;
    for (std::size_t i = 0; i < kPatchSide; ++i) {
      for (std::size_t j = 0; j < kPatchSide; ++j) out(i, j) = r(r0 + i, c0 + j);
    }
    return out;
  }
  const auto peak = peak_location(r);
  const std::size_t h = r.height();
  const std::size_t w = r.width();
  for (std::size_t i = 0; i < kPatchSide; ++i) {
    for (std::size_t j = 0; j < kPatchSide; ++j) {
      const std::size_t src_row = (peak.row + h - half + i) % h;
      const std::size_t src_col = (peak.col + w - half + j) % w;
      out(i, j) = r(src_row, src_col);
    }
  }
  return out;
}

ResponsePatch normalize01(const RawPatch& raw, std::uint32_t source_resolution, CropMode mode) {
  ResponsePatch p;
  p.source_resolution = source_resolution;
  p.crop_mode = mode;
  const auto [lo_it, hi_it] = std::minmax_element(raw.data().begin(), raw.data().end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  if (!(range > 0.0)) return p;
  const auto src = raw.data();
  for (std::size_t i = 0; i < kPatchSize; ++i) p.data[i] = static_cast<float>((src[i] - lo) / range);
  return p;
}

ResponsePatch make_patch(const ResponseMap& r, CropMode mode) {
  const auto centered = center_zero_lag(r);
  return normalize01(crop(centered, mode), static_cast<std::uint32_t>(r.width()), mode);
}

std::string encode_patch(const ResponsePatch& p) {
  std::ostringstream out(std::ios::binary);
  binio::write_bytes(out, "PT32");
  binio::write_le<std::uint32_t>(out, p.source_resolution);
  binio::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(p.crop_mode));
  for (float v : p.data) binio::write_f32(out, v);
  return out.str();
}

ResponsePatch decode_patch(std::string_view bytes) {
  std::istringstream in{std::string(bytes), std::ios::binary};
  binio::expect_magic(in, "PT32");
  ResponsePatch p;
  p.source_resolution = binio::read_le<std::uint32_t>(in, "PT32 resolution");
  const auto mode = binio::read_le<std::uint8_t>(in, "PT32 crop mode");
  if (mode > 1) throw IoError("PT32: unknown crop mode " + std::to_string(mode));
  p.crop_mode = static_cast<CropMode>(mode);
  for (auto& v : p.data) v = binio::read_f32(in, "PT32 payload");
  return p;
}

void write_patch(const std::filesystem::path& path, const ResponsePatch& p) {
  binio::write_file(path, encode_patch(p));
}

ResponsePatch read_patch(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  return decode_patch(std::string_view(bytes.data(), bytes.size()));
}

namespace {

constexpr std::string_view kMetricsHeader = "sample_id,set_id,label,peak,pce,peak_row,peak_col";

}  // namespace

std::string encode_metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out(kMetricsHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += r.sample_id + ',' + r.set_id + ',' + std::to_string(r.label) + ',' + csv::format_real(r.peak) + ',' +
           csv::format_real(r.pce) + ',' + std::to_string(r.peak_row) + ',' + std::to_string(r.peak_col) + '\n';
  }
  return out;
}

std::vector<MetricRow> decode_metrics_csv(std::string_view text) {
  std::vector<MetricRow> rows;
  csv::for_each_row(text, kMetricsHeader, 7, "metrics csv", [&](const auto& f, std::size_t line) {
    MetricRow r;
    r.sample_id = std::string(f[0]);
    r.set_id = std::string(f[1]);
    r.label = csv::parse_number<int>(f[2], "metrics csv", line);
    r.peak = csv::parse_number<double>(f[3], "metrics csv", line);
    r.pce = csv::parse_number<double>(f[4], "metrics csv", line);
    r.peak_row = csv::parse_number<std::size_t>(f[5], "metrics csv", line);
    r.peak_col = csv::parse_number<std::size_t>(f[6], "metrics csv", line);
    rows.push_back(std::move(r));
  });
  return rows;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
  binio::write_file(path, encode_metrics_csv(rows));
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  return decode_metrics_csv(std::string_view(bytes.data(), bytes.size()));
}

}  // namespace corrpost
