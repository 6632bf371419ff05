#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <span>
#include <vector>

#include "corrpost/classifier/augment.hpp"
#include "corrpost/response/response.hpp"
#include "corrpost/tensornet/model.hpp"
#include "corrpost/tensornet/optimizer.hpp"

namespace corrpost::classifier {

using Model = nn::ResNet<float>;

inline constexpr double kDecisionThreshold = 0.5;

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double l2 = 0.005;
  std::uint64_t seed = 0;
  /// Stratified share of the training data held back for per-epoch accuracy.
  double val_fraction = 0.1;
  AugmentConfig augment;
  nn::AdamConfig adam;
  nn::ArchSpec arch;

  void validate() const;
};

void to_json(nlohmann::ordered_json& j, const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Patches with binary labels (1 = true class).
struct LabeledPatches {
  std::vector<ResponsePatch> patches;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return patches.size(); }
  void add(const ResponsePatch& p, bool is_true) {
    patches.push_back(p);
    labels.push_back(is_true ? 1 : 0);
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  /// Mean training objective (BCE + L2) over the epoch's batches.
  double loss = 0.0;
  double bce = 0.0;
  double train_accuracy = 0.0;
  /// NaN when the validation split is empty.
  double val_accuracy = 0.0;
};

struct TrainReport {
  TrainConfig config;
  std::size_t param_count = 0;
  std::size_t train_true = 0, train_false = 0, val_true = 0, val_false = 0;
  /// Indices into the input dataset; disjoint from the training indices.
  std::vector<std::size_t> val_indices;
  std::vector<EpochRecord> epochs;

  std::string to_json() const;
};

struct TrainedModel {
  Model model;
  TrainReport report;
};

/// Seeded, single-threaded training with Adam on BCE + L2. Throws InputError
/// when a label is missing and DivergenceError (with epoch) on a NaN loss.
TrainedModel train(const LabeledPatches& data, const TrainConfig& cfg);

/// Writes model.cnnw, architecture.json and train_report.json into dir.
void save_trained(const std::filesystem::path& dir, TrainedModel& trained);
/// Rebuilds the network from architecture.json and loads model.cnnw.
Model load_trained(const std::filesystem::path& dir);

struct Prediction {
  bool is_true = false;
  double score = 0.0;
};

/// Inference-mode score (BN running statistics); one sample at a time, so
/// scores never depend on batch composition.
double score(Model& model, const ResponsePatch& patch);
std::vector<double> scores(Model& model, std::span<const ResponsePatch> patches);
Prediction predict(Model& model, const ResponsePatch& patch, double threshold = kDecisionThreshold);

/// Share of patches whose thresholded score matches the label.
double accuracy(Model& model, const LabeledPatches& data, double threshold = kDecisionThreshold);

}  // namespace corrpost::classifier
