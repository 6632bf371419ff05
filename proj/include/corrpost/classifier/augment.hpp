#pragma once

#include <random>

#include "corrpost/response/response.hpp"

namespace corrpost::classifier {

/// Training-time patch augmentation. Rotation is bilinear about the patch
/// center (15.5, 15.5), counter-clockwise as displayed, with zero fill.
struct AugmentConfig {
  double hflip_p = 0.5;
  double vflip_p = 0.5;
  double rot_max_deg = 90.0;
  /// Noise sigma is drawn from U(0, noise_sigma_max), in normalized units.
  double noise_sigma_max = 0.05;

  void validate() const;
};

/// Mirror left-right (columns).
ResponsePatch hflip(const ResponsePatch& p);
/// Mirror top-bottom (rows).
ResponsePatch vflip(const ResponsePatch& p);
ResponsePatch rotate(const ResponsePatch& p, double degrees);
/// Adds N(0, sigma) per pixel and clamps to [0, 1].
ResponsePatch add_noise(const ResponsePatch& p, double sigma, std::mt19937_64& rng);

/// Flips, rotation by U(0, rot_max_deg), noise, clamp to [0, 1].
ResponsePatch augment(const ResponsePatch& p, const AugmentConfig& cfg, std::mt19937_64& rng);

}  // namespace corrpost::classifier
