#pragma once

#include <random>

#include "corrpost/imagefft/image.hpp"

namespace corrpost::testing {

inline Image2D random_image(std::size_t side, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image2D img(side, side);
  for (auto& v : img.data()) v = u(rng);
  return img;
}

template <typename G>
double max_abs_diff(const G& a, const G& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

template <typename G>
double max_abs(const G& a) {
  double m = 0.0;
  for (const auto& v : a.data()) m = std::max(m, static_cast<double>(std::abs(v)));
  return m;
}

}  // namespace corrpost::testing
