#include "corrpost/pipeline/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "corrpost/common/errors.hpp"

namespace corrpost::pipeline {

Threshold fit_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ParameterError("fit_threshold: scores and labels differ in length");
  std::size_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw ParameterError("fit_threshold: non-finite score");
    positives += labels[i] != 0;
  }
  if (positives == 0 || positives == scores.size()) {
    throw InputError("fit_threshold: calibration split needs both labels");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Sweep upward: a threshold just above position k rejects order[0..k].
  // Correct count = negatives below + positives at or above.
  const std::size_t n = scores.size();
  std::size_t correct = positives;  // threshold below every score
  std::size_t best_correct = correct;
  double best_value = scores[order.front()] - 1.0;
  std::size_t k = 0;
  while (k < n) {
    const double v = scores[order[k]];
    while (k < n && scores[order[k]] == v) {
      if (labels[order[k]]) --correct;
      else ++correct;
      ++k;
    }
    if (correct > best_correct) {
      best_correct = correct;
      best_value = k < n ? v + (scores[order[k]] - v) / 2.0 : v + 1.0;
    }
  }
  return {best_value, static_cast<double>(best_correct) / static_cast<double>(n)};
}

std::size_t count_errors(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold) {
  if (scores.size() != labels.size()) throw ParameterError("count_errors: scores and labels differ in length");
  std::size_t errors = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) errors += (scores[i] >= threshold) != (labels[i] != 0);
  return errors;
}

}  // namespace corrpost::pipeline
