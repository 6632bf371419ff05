#include "corrpost/pipeline/report.hpp"

#include <algorithm>
#include <cstdio>

#include "corrpost/common/csv.hpp"

namespace corrpost::pipeline {

namespace {

constexpr std::string_view kReportHeader =
    "method,filter,family,subset,set_id,class_id,resolution,is_true,n,errors,error_pct";

}  // namespace

double SetRow::error_pct() const {
  return n == 0 ? 0.0 : 100.0 * static_cast<double>(errors) / static_cast<double>(n);
}

BucketSummary summarize(const std::vector<SetRow>& rows, double low_pct, double high_pct) {
  BucketSummary s;
  double other_sum = 0.0, total = 0.0;
  for (const auto& r : rows) {
    const double e = r.error_pct();
    ++s.sets;
    total += e;
    if (e < low_pct) {
      ++s.low;
    } else if (e > high_pct) {
      ++s.high;
    } else {
      ++s.other;
      other_sum += e;
    }
  }
  if (s.other > 0) s.other_mean_pct = other_sum / static_cast<double>(s.other);
  if (s.sets > 0) s.mean_pct = total / static_cast<double>(s.sets);
  return s;
}

std::string encode_report_csv(const std::vector<SetRow>& rows) {
  std::string out(kReportHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += r.method + ',' + r.filter + ',' + r.family + ',' + r.subset + ',' + r.set_id + ',' +
           std::to_string(r.class_id) + ',' + std::to_string(r.resolution) + ',' + (r.is_true ? "1" : "0") + ',' +
           std::to_string(r.n) + ',' + std::to_string(r.errors) + ',' + csv::format_real(r.error_pct()) + '\n';
  }
  return out;
}

std::vector<SetRow> decode_report_csv(std::string_view text) {
  constexpr std::string_view what = "report csv";
  std::vector<SetRow> rows;
  csv::for_each_row(text, kReportHeader, 11, what, [&](const auto& f, std::size_t line) {
    SetRow r;
    r.method = std::string(f[0]);
    r.filter = std::string(f[1]);
    r.family = std::string(f[2]);
    r.subset = std::string(f[3]);
    r.set_id = std::string(f[4]);
    r.class_id = csv::parse_number<std::uint32_t>(f[5], what, line);
    r.resolution = csv::parse_number<std::uint32_t>(f[6], what, line);
    r.is_true = csv::parse_number<int>(f[7], what, line) != 0;
    r.n = csv::parse_number<std::size_t>(f[8], what, line);
    r.errors = csv::parse_number<std::size_t>(f[9], what, line);
    if (r.errors > r.n) throw IoError("report csv line " + std::to_string(line) + ": errors exceed n");
    if (csv::parse_number<double>(f[10], what, line) != r.error_pct()) {
      throw IoError("report csv line " + std::to_string(line) + ": error_pct disagrees with errors/n");
    }
    rows.push_back(std::move(r));
  });
  return rows;
}

nlohmann::ordered_json to_json(const BucketSummary& s) {
  nlohmann::ordered_json j;
  j["sets"] = s.sets;
  j["error_below_low"] = s.low;
  j["error_above_high"] = s.high;
  j["other"] = s.other;
  j["other_mean_error_pct"] = s.other_mean_pct ? nlohmann::ordered_json(*s.other_mean_pct) : nullptr;
  j["mean_error_pct"] = s.mean_pct ? nlohmann::ordered_json(*s.mean_pct) : nullptr;
  return j;
}

std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& body) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : body) {
    for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < width.size(); ++c) {
      const std::string cell = c < cells.size() ? cells[c] : "";
      // First column left-aligned, numbers right-aligned.
      if (c == 0) out += cell + std::string(width[c] - cell.size(), ' ');
      else out += "  " + std::string(width[c] - cell.size(), ' ') + cell;
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + '\n';
  };
  std::string out = line(header);
  std::size_t total = width.empty() ? 0 : width[0];
  for (std::size_t c = 1; c < width.size(); ++c) total += 2 + width[c];
  out += std::string(total, '-') + '\n';
  for (const auto& row : body) out += line(row);
  return out;
}

std::string format_pct(std::optional<double> pct) {
  if (!pct) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *pct);
  return buf;
}

}  // namespace corrpost::pipeline
