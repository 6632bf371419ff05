#include "corrpost/classifier/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace corrpost::classifier {

namespace {

constexpr std::size_t kSide = kPatchSide;
constexpr double kCenter = (kSide - 1) / 2.0;

float sample_or_zero(const ResponsePatch& p, long row, long col) {
  if (row < 0 || col < 0 || row >= static_cast<long>(kSide) || col >= static_cast<long>(kSide)) return 0.0f;
  return p.at(static_cast<std::size_t>(row), static_cast<std::size_t>(col));
}

}  // namespace

void AugmentConfig::validate() const {
  if (!(hflip_p >= 0.0 && hflip_p <= 1.0) || !(vflip_p >= 0.0 && vflip_p <= 1.0)) {
    throw ParameterError("augment: flip probabilities must lie in [0, 1]");
  }
  if (!(rot_max_deg >= 0.0 && rot_max_deg <= 180.0)) throw ParameterError("augment: rot_max_deg must lie in [0, 180]");
  if (!(noise_sigma_max >= 0.0) || !std::isfinite(noise_sigma_max)) {
    throw ParameterError("augment: noise_sigma_max must be >= 0");
  }
}

ResponsePatch hflip(const ResponsePatch& p) {
  ResponsePatch out = p;
  for (std::size_t r = 0; r < kSide; ++r)
    for (std::size_t c = 0; c < kSide; ++c) out.at(r, c) = p.at(r, kSide - 1 - c);
  return out;
}

ResponsePatch vflip(const ResponsePatch& p) {
  ResponsePatch out = p;
  for (std::size_t r = 0; r < kSide; ++r)
    for (std::size_t c = 0; c < kSide; ++c) out.at(r, c) = p.at(kSide - 1 - r, c);
  return out;
}

ResponsePatch rotate(const ResponsePatch& p, double degrees) {
  if (degrees == 0.0) return p;
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  ResponsePatch out = p;
  for (std::size_t r = 0; r < kSide; ++r) {
    for (std::size_t c = 0; c < kSide; ++c) {
      // Inverse map: output offset -> source offset.
      const double dy = static_cast<double>(r) - kCenter;
      const double dx = static_cast<double>(c) - kCenter;
      const double sy = kCenter + dx * sn + dy * cs;
      const double sx = kCenter + dx * cs - dy * sn;
      const double fy = std::floor(sy);
      const double fx = std::floor(sx);
      const double wy = sy - fy;
      const double wx = sx - fx;
      const long y0 = static_cast<long>(fy);
      const long x0 = static_cast<long>(fx);
      const double v = (1 - wy) * ((1 - wx) * sample_or_zero(p, y0, x0) + wx * sample_or_zero(p, y0, x0 + 1)) +
                       wy * ((1 - wx) * sample_or_zero(p, y0 + 1, x0) + wx * sample_or_zero(p, y0 + 1, x0 + 1));
      out.at(r, c) = static_cast<float>(v);
    }
  }
  return out;
}

ResponsePatch add_noise(const ResponsePatch& p, double sigma, std::mt19937_64& rng) {
  ResponsePatch out = p;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (auto& v : out.data) v = static_cast<float>(std::clamp(v + sigma * noise(rng), 0.0, 1.0));
  return out;
}

ResponsePatch augment(const ResponsePatch& p, const AugmentConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ResponsePatch out = p;
  if (unit(rng) < cfg.hflip_p) out = hflip(out);
  if (unit(rng) < cfg.vflip_p) out = vflip(out);
  const double angle = unit(rng) * cfg.rot_max_deg;
  out = rotate(out, angle);
  const double sigma = unit(rng) * cfg.noise_sigma_max;
  if (sigma > 0.0) out = add_noise(out, sigma, rng);
  for (auto& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace corrpost::classifier
