#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "corrpost/cfsynth/filter.hpp"
#include "corrpost/pipeline/config.hpp"
#include "corrpost/pipeline/report.hpp"

namespace corrpost::pipeline {

enum class Role : std::uint8_t { kFilterTrain, kCnnTrain, kTest, kCalibration, kEvaluation };

std::string_view to_string(Role r);
Role role_from_string(std::string_view name);

struct Sample {
  synth::ImageEntry entry;
  std::string sample_id;  // <class>/<resolution>/<index>
  std::string set_id;     // <class>@<resolution>
  Role role = Role::kFilterTrain;
};

/// Deterministic role for every planned image. Per resolution, filter
/// training takes true images spread evenly over the index (and so rotation)
/// range. Vehicles: remaining true images alternate CNN-train/test, the
/// held-out class is test, other false classes are CNN-train. Faces:
/// remaining images split calibration/evaluation by fraction.
std::vector<Sample> assign_roles(const synth::DatasetManifest& m, const PipelineConfig& cfg);

enum class Stage : std::uint8_t { kGenData, kTrainFilter, kCorrelate, kPrep, kTrainCnn, kCrossEval, kEval };

std::string_view to_string(Stage s);

/// Run directory layout:
///   data/<family>/...            corpus and manifest.json
///   filters/<family>/<kind>_<res>.cflt, filters/filters.json
///   responses/<family>/<kind>/metrics.csv, .../patches/*.pt32
///   prep/<family>.csv            sample roles
///   cnn/                         model.cnnw, architecture.json, train_report.json
///   cross/cross_report.json
///   eval/eval_report.json, report.csv, report.txt
/// Every stage directory holds stage.json with the digest of the config
/// subset it depends on.
class Pipeline {
 public:
  using Logger = std::function<void(const std::string&)>;

  Pipeline(PipelineConfig cfg, std::filesystem::path out_dir, Logger log = {});

  /// Recomputes the stage; upstream stages run only when their stamp is
  /// missing or stale.
  void run(Stage s);
  /// Runs the stage unless its stamp is current.
  void ensure(Stage s);
  bool is_current(Stage s) const;

  const PipelineConfig& config() const { return cfg_; }
  const std::filesystem::path& out_dir() const { return root_; }
  std::filesystem::path stage_dir(Stage s) const;
  std::string stage_digest(Stage s) const;

  std::filesystem::path patch_path(synth::Family f, FilterKind k, const Sample& s) const;

 private:
  void gen_data();
  void train_filters();
  void correlate();
  void prep();
  void train_cnn();
  void cross_eval();
  void eval();
  void stamp(Stage s) const;
  const synth::DatasetManifest& manifest(synth::Family f) const;
  /// Corpus manifest on disk, checked against the config.
  synth::DatasetManifest load_corpus_manifest(synth::Family f) const;
  void log(const std::string& msg) const;

  PipelineConfig cfg_;
  std::filesystem::path root_;
  Logger log_;
};

inline constexpr Stage kAllStages[] = {Stage::kGenData,  Stage::kTrainFilter, Stage::kCorrelate, Stage::kPrep,
                                       Stage::kTrainCnn, Stage::kCrossEval,   Stage::kEval};
inline constexpr FilterKind kFilterKinds[] = {FilterKind::kOtMach, FilterKind::kMinace};

/// Mean removed before synthesis and correlation when zero_mean is set.
Image2D preprocess_scene(const Image2D& img, bool zero_mean);

/// Renders report.txt from the set rows and the summary JSON.
std::string render_report_text(const nlohmann::ordered_json& report, const std::vector<SetRow>& rows);

}  // namespace corrpost::pipeline
