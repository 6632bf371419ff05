#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace corrpost::pipeline {

/// Error of one method on one image set (class, resolution) for one filter
/// kind and one role subset.
struct SetRow {
  std::string method;  // peak | pce | cnn
  std::string filter;  // otmach | minace
  std::string family;
  std::string subset;  // train | test | calibration | evaluation
  std::string set_id;
  std::uint32_t class_id = 0;
  std::uint32_t resolution = 0;
  bool is_true = false;
  std::size_t n = 0;
  std::size_t errors = 0;

  /// 100 * errors / n; in [0, 100].
  double error_pct() const;
  friend bool operator==(const SetRow&, const SetRow&) = default;
};

/// Three buckets that partition a group of sets.
struct BucketSummary {
  std::size_t sets = 0;
  std::size_t low = 0;   // error < low bound
  std::size_t high = 0;  // error > high bound
  std::size_t other = 0;
  /// Mean error of the `other` sets; empty when there are none.
  std::optional<double> other_mean_pct;
  /// Mean error over every set; empty for an empty group.
  std::optional<double> mean_pct;
};

BucketSummary summarize(const std::vector<SetRow>& rows, double low_pct, double high_pct);

/// Header plus one line per row; 17 significant digits for reals.
std::string encode_report_csv(const std::vector<SetRow>& rows);
std::vector<SetRow> decode_report_csv(std::string_view text);

nlohmann::ordered_json to_json(const BucketSummary& s);

/// Aligned plain-text table with one column per method.
std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& body);

/// Fixed-point percentage, or "-" when empty.
std::string format_pct(std::optional<double> pct);

}  // namespace corrpost::pipeline
