#pragma once

#include <cstdint>
#include <span>

namespace corrpost::pipeline {

/// Decision rule "true iff score >= value".
struct Threshold {
  double value = 0.0;
  double calibration_accuracy = 0.0;
};

/// Accuracy-maximizing threshold. Candidates are the midpoints between
/// adjacent distinct scores plus one below the minimum and one above the
/// maximum; the lowest candidate among equals wins. Throws InputError unless
/// both labels are present, ParameterError on mismatched lengths or
/// non-finite scores.
Threshold fit_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Count of samples on the wrong side of the threshold.
std::size_t count_errors(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold);

}  // namespace corrpost::pipeline
