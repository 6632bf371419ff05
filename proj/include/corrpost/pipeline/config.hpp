#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <string>

#include "corrpost/cfsynth/filter.hpp"
#include "corrpost/classifier/classifier.hpp"
#include "corrpost/response/response.hpp"
#include "corrpost/synthdata/synthdata.hpp"

namespace corrpost::pipeline {

struct FilterSettings {
  double alpha = kDefaultOtMachAlpha, beta = kDefaultOtMachBeta, gamma = kDefaultOtMachGamma;
  /// MINACE noise floor as a fraction of the envelope maximum.
  double minace_noise_fraction = kDefaultMinaceNoiseFraction;
  /// True-class images per resolution reserved for filter synthesis, spread
  /// evenly over the rotation range.
  std::map<std::uint32_t, std::size_t> train_per_resolution = {{256, 32}, {128, 16}, {64, 8}, {32, 6}};
  /// Subtract each scene's mean before synthesis and correlation.
  bool zero_mean = true;

  std::size_t train_count(std::uint32_t resolution) const;
};

struct EvalSettings {
  double low_error_pct = 0.001;
  double high_error_pct = 25.0;
  /// Vehicle class whose scenes never reach CNN training.
  std::uint32_t held_out_class = 3;
};

struct CrossDomainSettings {
  bool enabled = true;
  /// Share of each face set used to calibrate baseline thresholds.
  double calibration_fraction = 0.5;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  CropMode crop_mode = CropMode::kCenter;
  synth::DatasetManifest vehicles;
  synth::DatasetManifest faces;
  FilterSettings filters;
  classifier::TrainConfig train;
  EvalSettings eval;
  CrossDomainSettings cross_domain;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  /// SHA-256 of the canonical JSON, excluding `threads` (which never changes outputs).
  std::string digest() const;
};

PipelineConfig default_config();
/// Overlays a (possibly partial) JSON document on the defaults.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

/// Re-seeds both corpora and the trainer from one seed.
void apply_seed(PipelineConfig& cfg, std::uint64_t seed);

}  // namespace corrpost::pipeline
