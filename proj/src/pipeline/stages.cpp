#include "corrpost/pipeline/stages.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "corrpost/classifier/classifier.hpp"
#include "corrpost/common/binary_io.hpp"
#include "corrpost/common/csv.hpp"
#include "corrpost/common/parallel.hpp"
#include "corrpost/common/sha256.hpp"
#include "corrpost/imagefft/image.hpp"
#include "corrpost/pipeline/baseline.hpp"

namespace corrpost::pipeline {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using synth::Family;

namespace {

constexpr Family kFamilies[] = {Family::kVehicleShapes, Family::kFaceBlobs};
constexpr std::string_view kRolesHeader = "sample_id,set_id,class_id,is_true,resolution,index,rotation_deg,role";

std::string class_name(Family f, std::uint32_t class_id) { return synth::catalogue_class(f, class_id).name; }

std::string pad4(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04u", v);
  return buf;
}

std::string set_id_for(Family f, std::uint32_t class_id, std::uint32_t res) {
  return class_name(f, class_id) + "@" + std::to_string(res);
}

// Evenly spread picks out of `count`, by position.
std::set<std::size_t> spread_picks(std::size_t count, std::size_t n) {
  std::set<std::size_t> picks;
  for (std::size_t k = 0; k < n; ++k) picks.insert((2 * k + 1) * count / (2 * n));
  return picks;
}

void write_json(const fs::path& path, const ordered_json& j) { binio::write_file(path, j.dump(2) + "\n"); }

ordered_json read_json(const fs::path& path) {
  const auto bytes = binio::read_file(path);
  try {
    return ordered_json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string encode_roles_csv(const std::vector<Sample>& samples) {
  std::string out(kRolesHeader);
  out += '\n';
  for (const auto& s : samples) {
    const auto& e = s.entry;
    out += s.sample_id + ',' + s.set_id + ',' + std::to_string(e.class_id) + ',' + (e.is_true ? "1" : "0") + ',' +
           std::to_string(e.resolution) + ',' + std::to_string(e.index) + ',' + csv::format_real(e.rotation_deg) +
           ',' + std::string(to_string(s.role)) + '\n';
  }
  return out;
}

std::vector<Sample> decode_roles_csv(std::string_view text) {
  constexpr std::string_view what = "roles csv";
  std::vector<Sample> out;
  csv::for_each_row(text, kRolesHeader, 8, what, [&](const auto& f, std::size_t line) {
    Sample s;
    s.sample_id = std::string(f[0]);
    s.set_id = std::string(f[1]);
    s.entry.class_id = csv::parse_number<std::uint32_t>(f[2], what, line);
    s.entry.is_true = csv::parse_number<int>(f[3], what, line) != 0;
    s.entry.resolution = csv::parse_number<std::uint32_t>(f[4], what, line);
    s.entry.index = csv::parse_number<std::uint32_t>(f[5], what, line);
    s.entry.rotation_deg = csv::parse_number<double>(f[6], what, line);
    s.role = role_from_string(f[7]);
    out.push_back(std::move(s));
  });
  return out;
}

nlohmann::json settings_of(const synth::DatasetManifest& m) {
  auto j = nlohmann::json::parse(m.to_json().dump());
  j.erase("images");
  j.erase("filters");
  return j;
}

/// Scores patches on up to `threads` private copies of the frozen model.
std::vector<double> score_parallel(const fs::path& cnn_dir, const std::vector<ResponsePatch>& patches,
                                   unsigned threads) {
  std::vector<double> out(patches.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, patches.size() / 64 + 1));
  const std::size_t chunk = (patches.size() + workers - 1) / workers;
  parallel_for(workers, static_cast<unsigned>(workers), [&](std::size_t w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(patches.size(), begin + chunk);
    if (begin >= end) return;
    auto model = classifier::load_trained(cnn_dir);
    const auto s = classifier::scores(model, std::span(patches).subspan(begin, end - begin));
    std::copy(s.begin(), s.end(), out.begin() + static_cast<std::ptrdiff_t>(begin));
  });
  return out;
}

// Per-sample scores of one family and filter kind.
struct Scored {
  const Sample* sample;
  double peak, pce, cnn;
};

struct SetKey {
  std::uint32_t class_id, resolution;
  bool operator<(const SetKey& o) const {
    return class_id != o.class_id ? class_id < o.class_id : resolution > o.resolution;
  }
};

std::vector<SetRow> set_rows(Family f, FilterKind kind, std::string_view subset, const std::vector<Scored>& scored,
                             const std::map<std::uint32_t, std::pair<Threshold, Threshold>>& thresholds) {
  std::map<SetKey, std::array<std::size_t, 5>> acc;  // n, peak, pce, cnn errors, is_true
  for (const auto& s : scored) {
    const auto& e = s.sample->entry;
    const auto& [tp, tc] = thresholds.at(e.resolution);
    auto& a = acc[{e.class_id, e.resolution}];
    a[4] = e.is_true;
    a[0] += 1;
    a[1] += (s.peak >= tp.value) != e.is_true;
    a[2] += (s.pce >= tc.value) != e.is_true;
    a[3] += (s.cnn >= classifier::kDecisionThreshold) != e.is_true;
  }
  std::vector<SetRow> rows;
  const char* methods[] = {"peak", "pce", "cnn"};
  for (int m = 0; m < 3; ++m) {
    for (const auto& [key, a] : acc) {
      SetRow r;
      r.method = methods[m];
      r.filter = std::string(to_string(kind));
      r.family = std::string(synth::to_string(f));
      r.subset = std::string(subset);
      r.set_id = set_id_for(f, key.class_id, key.resolution);
      r.class_id = key.class_id;
      r.resolution = key.resolution;
      r.is_true = a[4] != 0;
      r.n = a[0];
      r.errors = a[1 + m];
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

std::vector<SetRow> select(const std::vector<SetRow>& rows, std::string_view method, std::string_view filter,
                           std::string_view subset) {
  std::vector<SetRow> out;
  for (const auto& r : rows) {
    if (r.method == method && (filter == "both" || r.filter == filter) && r.subset == subset) out.push_back(r);
  }
  return out;
}

ordered_json summaries(const std::vector<SetRow>& rows, std::string_view subset, const EvalSettings& ev) {
  ordered_json out = ordered_json::array();
  for (const char* filter : {"otmach", "minace", "both"}) {
    for (const char* method : {"peak", "pce", "cnn"}) {
      ordered_json j;
      j["filter"] = filter;
      j["subset"] = subset;
      j["method"] = method;
      j.update(to_json(summarize(select(rows, method, filter, subset), ev.low_error_pct, ev.high_error_pct)));
      out.push_back(std::move(j));
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(Role r) {
  switch (r) {
    case Role::kFilterTrain: return "filter_train";
    case Role::kCnnTrain: return "cnn_train";
    case Role::kTest: return "test";
    case Role::kCalibration: return "calibration";
    case Role::kEvaluation: return "evaluation";
  }
  return "?";
}

Role role_from_string(std::string_view name) {
  for (Role r : {Role::kFilterTrain, Role::kCnnTrain, Role::kTest, Role::kCalibration, Role::kEvaluation}) {
    if (to_string(r) == name) return r;
  }
  throw IoError("unknown role '" + std::string(name) + "'");
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kGenData: return "gen-data";
    case Stage::kTrainFilter: return "train-filter";
    case Stage::kCorrelate: return "correlate";
    case Stage::kPrep: return "prep";
    case Stage::kTrainCnn: return "train-cnn";
    case Stage::kCrossEval: return "cross-eval";
    case Stage::kEval: return "eval";
  }
  return "?";
}

Image2D preprocess_scene(const Image2D& img, bool zero_mean) {
  if (!zero_mean) return img;
  Image2D out = img;
  double mean = 0.0;
  for (double v : img.data()) mean += v;
  mean /= static_cast<double>(img.data().size());
  for (double& v : out.data()) v -= mean;
  return out;
}

std::vector<Sample> assign_roles(const synth::DatasetManifest& m, const PipelineConfig& cfg) {
  const auto entries = m.images.empty() ? synth::plan_images(m) : m.images;
  const bool vehicles = m.family == Family::kVehicleShapes;
  // Group positions by (class, resolution) in index order.
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < entries.size(); ++i) groups[{entries[i].class_id, entries[i].resolution}].push_back(i);

  std::vector<Sample> out(entries.size());
  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end(), [&](auto a, auto b) { return entries[a].index < entries[b].index; });
    const auto& first = entries[members.front()];
    std::set<std::size_t> picks;
    if (first.is_true) picks = spread_picks(members.size(), cfg.filters.train_count(first.resolution));
    std::size_t rest = 0;
    for (std::size_t p = 0; p < members.size(); ++p) {
      const auto& e = entries[members[p]];
      Sample& s = out[members[p]];
      s.entry = e;
      s.sample_id = class_name(m.family, e.class_id) + "/" + std::to_string(e.resolution) + "/" + pad4(e.index);
      s.set_id = set_id_for(m.family, e.class_id, e.resolution);
      if (picks.count(p)) {
        s.role = Role::kFilterTrain;
      } else if (vehicles) {
        if (e.is_true) s.role = (rest++ % 2 == 0) ? Role::kCnnTrain : Role::kTest;
        else s.role = e.class_id == cfg.eval.held_out_class ? Role::kTest : Role::kCnnTrain;
      } else {
        const double f = cfg.cross_domain.calibration_fraction;
        const auto q = static_cast<double>(rest++);
        s.role = std::floor((q + 1) * f) > std::floor(q * f) ? Role::kCalibration : Role::kEvaluation;
      }
    }
  }
  return out;
}

Pipeline::Pipeline(PipelineConfig cfg, fs::path out_dir, Logger log)
    : cfg_(std::move(cfg)), root_(std::move(out_dir)), log_(std::move(log)) {
  cfg_.validate();
}

void Pipeline::log(const std::string& msg) const {
  if (log_) log_(msg);
}

fs::path Pipeline::stage_dir(Stage s) const {
  switch (s) {
    case Stage::kGenData: return root_ / "data";
    case Stage::kTrainFilter: return root_ / "filters";
    case Stage::kCorrelate: return root_ / "responses";
    case Stage::kPrep: return root_ / "prep";
    case Stage::kTrainCnn: return root_ / "cnn";
    case Stage::kCrossEval: return root_ / "cross";
    case Stage::kEval: return root_ / "eval";
  }
  return root_;
}

std::string Pipeline::stage_digest(Stage s) const {
  const ordered_json full = cfg_.to_json();
  std::vector<std::string> keys = {"seed", "crop_mode", "data"};
  if (s >= Stage::kTrainFilter) keys.push_back("filters");
  if (s >= Stage::kPrep) {
    keys.push_back("eval");
    keys.push_back("cross_domain");
  }
  if (s >= Stage::kTrainCnn) keys.push_back("train");
  ordered_json subset;
  subset["stage"] = std::string(to_string(s));
  for (const auto& k : keys) subset[k] = full.at(k);
  return to_hex(sha256(subset.dump()));
}

void Pipeline::stamp(Stage s) const {
  ordered_json j;
  j["stage"] = std::string(to_string(s));
  j["config_digest"] = stage_digest(s);
  j["config"] = cfg_.to_json();
  write_json(stage_dir(s) / "stage.json", j);
}

bool Pipeline::is_current(Stage s) const {
  const fs::path p = stage_dir(s) / "stage.json";
  if (!fs::exists(p)) return false;
  try {
    return read_json(p).value("config_digest", std::string()) == stage_digest(s);
  } catch (const Error&) {
    return false;
  }
}

void Pipeline::ensure(Stage s) {
  if (!is_current(s)) run(s);
}

void Pipeline::run(Stage s) {
  log("[" + std::string(to_string(s)) + "] start");
  try {
    // Drop the stamp first so an interrupted stage is redone.
    fs::remove(stage_dir(s) / "stage.json");
    switch (s) {
      case Stage::kGenData: gen_data(); break;
      case Stage::kTrainFilter: train_filters(); break;
      case Stage::kCorrelate: correlate(); break;
      case Stage::kPrep: prep(); break;
      case Stage::kTrainCnn: train_cnn(); break;
      case Stage::kCrossEval: cross_eval(); break;
      case Stage::kEval: eval(); break;
    }
    stamp(s);
  } catch (Error& e) {
    e.prepend("stage " + std::string(to_string(s)));
    throw;
  } catch (const fs::filesystem_error& e) {
    throw IoError("stage " + std::string(to_string(s)) + ": " + e.what());
  }
  log("[" + std::string(to_string(s)) + "] done");
}

const synth::DatasetManifest& Pipeline::manifest(Family f) const {
  return f == Family::kVehicleShapes ? cfg_.vehicles : cfg_.faces;
}

synth::DatasetManifest Pipeline::load_corpus_manifest(Family f) const {
  const fs::path path = synth::manifest_path(stage_dir(Stage::kGenData), f);
  if (!fs::exists(path)) throw ConfigError("missing corpus: " + path.string());
  auto on_disk = synth::read_manifest(path);
  if (settings_of(on_disk) != settings_of(manifest(f))) {
    throw ConfigError(path.string() + " was generated from a different configuration");
  }
  return on_disk;
}

fs::path Pipeline::patch_path(Family f, FilterKind k, const Sample& s) const {
  const auto& e = s.entry;
  return stage_dir(Stage::kCorrelate) / synth::to_string(f) / to_string(k) / "patches" /
         (class_name(f, e.class_id) + "_" + std::to_string(e.resolution) + "_" + pad4(e.index) + ".pt32");
}

void Pipeline::gen_data() {
  const fs::path dir = stage_dir(Stage::kGenData);
  for (Family f : kFamilies) {
    fs::remove_all(dir / synth::to_string(f));
    const auto m = synth::generate_corpus(manifest(f), dir, cfg_.threads);
    log("  " + std::string(synth::to_string(f)) + ": " + std::to_string(m.images.size()) + " images");
  }
}

void Pipeline::train_filters() {
  ensure(Stage::kGenData);
  const fs::path data = stage_dir(Stage::kGenData);
  const fs::path dir = stage_dir(Stage::kTrainFilter);
  ordered_json index = ordered_json::array();
  for (Family f : kFamilies) {
    const auto m = load_corpus_manifest(f);
    const auto samples = assign_roles(m, cfg_);
    fs::remove_all(dir / synth::to_string(f));
    fs::create_directories(dir / synth::to_string(f));
    for (const auto res : m.resolutions) {
      TrainingSet ts;
      ordered_json members = ordered_json::array();
      for (const auto& s : samples) {
        if (s.role != Role::kFilterTrain || s.entry.resolution != res) continue;
        ts.images.push_back(preprocess_scene(read_pgm(data / s.entry.path), cfg_.filters.zero_mean));
        members.push_back(s.sample_id);
      }
      const auto& fs_ = cfg_.filters;
      const CorrelationFilter filters[] = {
          synthesize_otmach(ts, fs_.alpha, fs_.beta, fs_.gamma),
          synthesize_minace(ts, default_minace_noise(ts, fs_.minace_noise_fraction))};
      for (const auto& filter : filters) {
        const std::string file = std::string(to_string(filter.kind)) + "_" + std::to_string(res) + ".cflt";
        write_filter(dir / synth::to_string(f) / file, filter);
        index.push_back({{"family", synth::to_string(f)},
                         {"kind", to_string(filter.kind)},
                         {"resolution", res},
                         {"file", std::string(synth::to_string(f)) + "/" + file},
                         {"params",
                          {{"alpha", filter.params.alpha},
                           {"beta", filter.params.beta},
                           {"gamma", filter.params.gamma},
                           {"noise_c", filter.params.noise_c}}},
                         {"training_digest", to_hex(filter.training_digest)},
                         {"training_samples", members}});
      }
    }
  }
  write_json(dir / "filters.json", index);
}

void Pipeline::correlate() {
  ensure(Stage::kTrainFilter);
  const fs::path data = stage_dir(Stage::kGenData);
  const fs::path fdir = stage_dir(Stage::kTrainFilter);
  const fs::path dir = stage_dir(Stage::kCorrelate);
  for (Family f : kFamilies) {
    const auto m = load_corpus_manifest(f);
    synth::verify_corpus(m, data);
    const auto samples = assign_roles(m, cfg_);
    std::map<std::pair<FilterKind, std::uint32_t>, CorrelationFilter> filters;
    for (FilterKind k : kFilterKinds) {
      for (auto res : m.resolutions) {
        filters[{k, res}] = read_filter(fdir / synth::to_string(f) /
                                        (std::string(to_string(k)) + "_" + std::to_string(res) + ".cflt"));
      }
    }
    fs::remove_all(dir / synth::to_string(f));
    for (FilterKind k : kFilterKinds) fs::create_directories(dir / synth::to_string(f) / to_string(k) / "patches");

    std::vector<MetricRow> rows[2];
    for (auto& r : rows) r.resize(samples.size());
    parallel_for(samples.size(), cfg_.threads, [&](std::size_t i) {
      const Sample& s = samples[i];
      const auto scene = preprocess_scene(read_pgm(data / s.entry.path), cfg_.filters.zero_mean);
      for (FilterKind k : kFilterKinds) {
        const auto r = cross_correlate(scene, filters.at({k, s.entry.resolution}));
        const auto ms = score(r);
        write_patch(patch_path(f, k, s), make_patch(r, cfg_.crop_mode));
        rows[static_cast<int>(k)][i] = {s.sample_id, s.set_id, s.entry.is_true ? 1 : 0, ms.peak_height, ms.pce,
                                        ms.peak_location.row, ms.peak_location.col};
      }
    });
    for (FilterKind k : kFilterKinds) {
      write_metrics_csv(dir / synth::to_string(f) / to_string(k) / "metrics.csv", rows[static_cast<int>(k)]);
    }
    log("  " + std::string(synth::to_string(f)) + ": " + std::to_string(2 * samples.size()) + " responses");
  }
}

void Pipeline::prep() {
  ensure(Stage::kGenData);
  const fs::path dir = stage_dir(Stage::kPrep);
  fs::create_directories(dir);
  ordered_json lineage;
  for (Family f : kFamilies) {
    const auto samples = assign_roles(load_corpus_manifest(f), cfg_);
    binio::write_file(dir / (std::string(synth::to_string(f)) + ".csv"), encode_roles_csv(samples));
    std::map<SetKey, std::map<std::string, std::size_t>> counts;
    for (const auto& s : samples) {
      if (f == Family::kVehicleShapes && s.entry.class_id == cfg_.eval.held_out_class && s.role == Role::kCnnTrain) {
        throw StateError("held-out class assigned to CNN training");
      }
      counts[{s.entry.class_id, s.entry.resolution}][std::string(to_string(s.role))] += 1;
    }
    ordered_json sets = ordered_json::array();
    for (const auto& [key, c] : counts) {
      ordered_json j;
      j["set_id"] = set_id_for(f, key.class_id, key.resolution);
      for (const auto& [role, n] : c) j[role] = n;
      sets.push_back(std::move(j));
    }
    lineage[synth::to_string(f)] = sets;
  }
  lineage["held_out_class"] = class_name(Family::kVehicleShapes, cfg_.eval.held_out_class);
  write_json(dir / "lineage.json", lineage);
}

namespace {

std::vector<Sample> read_roles(const fs::path& prep_dir, Family f) {
  const auto bytes = binio::read_file(prep_dir / (std::string(synth::to_string(f)) + ".csv"));
  return decode_roles_csv(std::string_view(bytes.data(), bytes.size()));
}

}  // namespace

void Pipeline::train_cnn() {
  ensure(Stage::kCorrelate);
  ensure(Stage::kPrep);
  const auto samples = read_roles(stage_dir(Stage::kPrep), Family::kVehicleShapes);
  classifier::LabeledPatches data;
  for (const auto& s : samples) {
    if (s.role != Role::kCnnTrain) continue;
    data.add(read_patch(patch_path(Family::kVehicleShapes, FilterKind::kOtMach, s)), s.entry.is_true);
  }
  log("  training on " + std::to_string(data.size()) + " OT MACH patches");
  auto trained = classifier::train(data, cfg_.train);
  for (const auto& e : trained.report.epochs) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "  epoch %zu: loss %.4f train acc %.4f val acc %.4f", e.epoch, e.loss,
                  e.train_accuracy, e.val_accuracy);
    log(buf);
  }
  const fs::path dir = stage_dir(Stage::kTrainCnn);
  fs::create_directories(dir);
  classifier::save_trained(dir, trained);
}

namespace {

struct FamilyScores {
  std::vector<Sample> samples;
  // Per filter kind, aligned with `samples`; only scored roles are filled.
  std::vector<Scored> scored[2];
};

}  // namespace

// Loads metrics and CNN scores for samples whose role is in `roles`.
static FamilyScores score_family(const Pipeline& p, Family f, const std::set<Role>& roles, unsigned threads) {
  FamilyScores out;
  for (auto& s : read_roles(p.stage_dir(Stage::kPrep), f)) {
    if (roles.count(s.role)) out.samples.push_back(std::move(s));
  }
  const fs::path rdir = p.stage_dir(Stage::kCorrelate) / synth::to_string(f);
  for (FilterKind k : kFilterKinds) {
    std::map<std::string, MetricRow> metrics;
    for (auto& r : read_metrics_csv(rdir / to_string(k) / "metrics.csv")) metrics.emplace(r.sample_id, r);
    std::vector<ResponsePatch> patches;
    patches.reserve(out.samples.size());
    for (const auto& s : out.samples) patches.push_back(read_patch(p.patch_path(f, k, s)));
    const auto cnn = score_parallel(p.stage_dir(Stage::kTrainCnn), patches, threads);
    auto& dst = out.scored[static_cast<int>(k)];
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
      const auto it = metrics.find(out.samples[i].sample_id);
      if (it == metrics.end()) throw IoError("no metrics for sample " + out.samples[i].sample_id);
      dst.push_back({&out.samples[i], it->second.peak, it->second.pce, cnn[i]});
    }
  }
  return out;
}

namespace {

// Peak and PCE thresholds per resolution, fitted on the calibration role.
std::map<std::uint32_t, std::pair<Threshold, Threshold>> fit_thresholds(const std::vector<Scored>& scored,
                                                                         Role calibration, ordered_json& log,
                                                                         std::string_view filter) {
  std::map<std::uint32_t, std::array<std::vector<double>, 2>> by_res;
  std::map<std::uint32_t, std::vector<std::uint8_t>> labels;
  for (const auto& s : scored) {
    if (s.sample->role != calibration) continue;
    const auto res = s.sample->entry.resolution;
    by_res[res][0].push_back(s.peak);
    by_res[res][1].push_back(s.pce);
    labels[res].push_back(s.sample->entry.is_true ? 1 : 0);
  }
  std::map<std::uint32_t, std::pair<Threshold, Threshold>> out;
  for (const auto& [res, v] : by_res) {
    const Threshold tp = fit_threshold(v[0], labels[res]);
    const Threshold tc = fit_threshold(v[1], labels[res]);
    out[res] = {tp, tc};
    for (const auto& [metric, t] : {std::pair{"peak", tp}, std::pair{"pce", tc}}) {
      log.push_back({{"filter", filter},
                     {"metric", metric},
                     {"resolution", res},
                     {"threshold", t.value},
                     {"calibration_accuracy", t.calibration_accuracy}});
    }
  }
  return out;
}

std::vector<Scored> with_role(const std::vector<Scored>& scored, Role r) {
  std::vector<Scored> out;
  for (const auto& s : scored) {
    if (s.sample->role == r) out.push_back(s);
  }
  return out;
}

ordered_json cnn_accuracy(const std::vector<Scored>& scored) {
  std::map<std::uint32_t, std::pair<std::size_t, std::size_t>, std::greater<>> by_res;
  std::size_t ok = 0;
  for (const auto& s : scored) {
    const bool hit = (s.cnn >= classifier::kDecisionThreshold) == s.sample->entry.is_true;
    ok += hit;
    auto& [c, n] = by_res[s.sample->entry.resolution];
    c += hit;
    n += 1;
  }
  ordered_json j;
  j["n"] = scored.size();
  j["accuracy"] = scored.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(scored.size());
  ordered_json per = ordered_json::object();
  for (const auto& [res, cn] : by_res) {
    per[std::to_string(res)] = static_cast<double>(cn.first) / static_cast<double>(cn.second);
  }
  j["by_resolution"] = per;
  return j;
}

}  // namespace

void Pipeline::cross_eval() {
  ensure(Stage::kTrainCnn);
  const auto scores = score_family(*this, Family::kFaceBlobs, {Role::kCalibration, Role::kEvaluation}, cfg_.threads);
  ordered_json thresholds = ordered_json::array();
  std::vector<SetRow> rows;
  ordered_json accuracy;
  for (FilterKind k : kFilterKinds) {
    const auto& scored = scores.scored[static_cast<int>(k)];
    const auto t = fit_thresholds(scored, Role::kCalibration, thresholds, to_string(k));
    const auto evaluation = with_role(scored, Role::kEvaluation);
    const auto r = set_rows(Family::kFaceBlobs, k, "evaluation", evaluation, t);
    rows.insert(rows.end(), r.begin(), r.end());
    accuracy[std::string(to_string(k))] = cnn_accuracy(evaluation);
  }
  ordered_json j;
  j["family"] = synth::to_string(Family::kFaceBlobs);
  j["model_family"] = synth::to_string(Family::kVehicleShapes);
  ordered_json avg;
  for (const char* method : {"peak", "pce", "cnn"}) {
    avg[method] = to_json(summarize(select(rows, method, "both", "evaluation"), cfg_.eval.low_error_pct,
                                       cfg_.eval.high_error_pct))["mean_error_pct"];
  }
  j["average_error_pct"] = avg;
  j["summary"] = summaries(rows, "evaluation", cfg_.eval);
  j["cnn_accuracy"] = accuracy;
  j["thresholds"] = thresholds;
  const fs::path dir = stage_dir(Stage::kCrossEval);
  fs::create_directories(dir);
  write_json(dir / "cross_report.json", j);
  binio::write_file(dir / "report.csv", encode_report_csv(rows));
}

void Pipeline::eval() {
  ensure(Stage::kTrainCnn);
  if (cfg_.cross_domain.enabled) ensure(Stage::kCrossEval);
  const auto scores = score_family(*this, Family::kVehicleShapes, {Role::kCnnTrain, Role::kTest}, cfg_.threads);
  ordered_json thresholds = ordered_json::array();
  std::vector<SetRow> rows;
  ordered_json accuracy;
  for (FilterKind k : kFilterKinds) {
    const auto& scored = scores.scored[static_cast<int>(k)];
    const auto t = fit_thresholds(scored, Role::kCnnTrain, thresholds, to_string(k));
    const auto train = with_role(scored, Role::kCnnTrain);
    const auto test = with_role(scored, Role::kTest);
    for (const auto& [subset, part] : {std::pair{"train", &train}, std::pair{"test", &test}}) {
      const auto r = set_rows(Family::kVehicleShapes, k, subset, *part, t);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    accuracy[std::string(to_string(k))] = {{"train", cnn_accuracy(train)}, {"test", cnn_accuracy(test)}};
  }

  ordered_json report;
  report["config"] = cfg_.to_json();
  report["config_digest"] = cfg_.digest();
  report["set_definition"] = "class_resolution";
  report["held_out_class"] = class_name(Family::kVehicleShapes, cfg_.eval.held_out_class);
  report["cnn_trained_on"] = "otmach";
  report["cnn_threshold"] = classifier::kDecisionThreshold;
  report["buckets"] = {{"low_error_pct", cfg_.eval.low_error_pct}, {"high_error_pct", cfg_.eval.high_error_pct}};
  report["lineage"] = read_json(stage_dir(Stage::kPrep) / "lineage.json");
  report["filters"] = read_json(stage_dir(Stage::kTrainFilter) / "filters.json");
  report["summary"] = {{"test", summaries(rows, "test", cfg_.eval)}, {"train", summaries(rows, "train", cfg_.eval)}};
  report["cnn_accuracy"] = accuracy;
  report["thresholds"] = thresholds;
  std::vector<SetRow> all = rows;
  if (cfg_.cross_domain.enabled) {
    const fs::path cdir = stage_dir(Stage::kCrossEval);
    report["cross_domain"] = read_json(cdir / "cross_report.json");
    const auto bytes = binio::read_file(cdir / "report.csv");
    const auto face_rows = decode_report_csv(std::string_view(bytes.data(), bytes.size()));
    all.insert(all.end(), face_rows.begin(), face_rows.end());
  } else {
    report["cross_domain"] = nullptr;
  }
  report["train_report"] = read_json(stage_dir(Stage::kTrainCnn) / "train_report.json");

  const fs::path dir = stage_dir(Stage::kEval);
  fs::create_directories(dir);
  write_json(dir / "eval_report.json", report);
  binio::write_file(dir / "report.csv", encode_report_csv(all));
  binio::write_file(dir / "report.txt", render_report_text(report, all));
}

std::string render_report_text(const nlohmann::ordered_json& report, const std::vector<SetRow>& rows) {
  const auto fmt_g = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return std::string(buf);
  };
  const auto pct = [](const ordered_json& v) {
    return v.is_null() ? std::string("-") : format_pct(v.get<double>());
  };
  const double low = report.at("buckets").at("low_error_pct").get<double>();
  const double high = report.at("buckets").at("high_error_pct").get<double>();
  std::string out;
  out += "corrpost evaluation report\n";
  out += "config digest: " + report.at("config_digest").get<std::string>() + "\n";
  out += "image set = (class, resolution); CNN trained on otmach responses; held-out false class: " +
         report.at("held_out_class").get<std::string>() + "\n\n";

  auto bucket_table = [&](const std::vector<SetRow>& source, std::string_view subset, std::string_view filter) {
    std::vector<std::vector<std::string>> body(4);
    body[0] = {"sets with error < " + fmt_g(low) + "%"};
    body[1] = {"sets with error > " + fmt_g(high) + "%"};
    body[2] = {"average error of other sets, %"};
    body[3] = {"average error of all sets, %"};
    for (const char* method : {"peak", "pce", "cnn"}) {
      const auto s = summarize(select(source, method, filter, subset), low, high);
      body[0].push_back(std::to_string(s.low));
      body[1].push_back(std::to_string(s.high));
      body[2].push_back(format_pct(s.other_mean_pct));
      body[3].push_back(format_pct(s.mean_pct));
    }
    return render_table({std::string(subset) + " sets, filter " + std::string(filter), "peak", "pce", "cnn"}, body);
  };
  for (const char* filter : {"both", "otmach", "minace"}) out += bucket_table(rows, "test", filter) + "\n";
  out += bucket_table(rows, "train", "both") + "\n";

  {
    std::vector<std::vector<std::string>> body;
    for (const char* filter : {"otmach", "minace"}) {
      const auto& a = report.at("cnn_accuracy").at(filter).at("test");
      std::vector<std::string> row = {filter, format_pct(100.0 * a.at("accuracy").get<double>())};
      for (const auto& [res, v] : a.at("by_resolution").items()) row.push_back(format_pct(100.0 * v.get<double>()));
      body.push_back(row);
    }
    std::vector<std::string> header = {"CNN test accuracy, %", "all"};
    for (const auto& [res, v] : report.at("cnn_accuracy").at("otmach").at("test").at("by_resolution").items()) {
      header.push_back(res);
    }
    out += render_table(header, body) + "\n";
  }

  if (!report.at("cross_domain").is_null()) {
    const auto& avg = report.at("cross_domain").at("average_error_pct");
    out += render_table({"cross-domain (" + report.at("cross_domain").at("family").get<std::string>() +
                             "), average error %",
                         "peak", "pce", "cnn"},
                        {{"evaluation sets, both filters", pct(avg.at("peak")), pct(avg.at("pce")), pct(avg.at("cnn"))}}) +
           "\n";
  }

  // Per-set errors, one line per (subset, filter, set).
  std::map<std::tuple<std::string, std::string, std::string, std::string>, std::map<std::string, std::string>> grid;
  std::vector<std::tuple<std::string, std::string, std::string, std::string>> order;
  for (const auto& r : rows) {
    const auto key = std::make_tuple(r.family, r.subset, r.filter, r.set_id);
    if (!grid.count(key)) order.push_back(key);
    grid[key][r.method] = format_pct(r.error_pct()) + " (" + std::to_string(r.errors) + "/" + std::to_string(r.n) + ")";
  }
  std::vector<std::vector<std::string>> body;
  for (const auto& key : order) {
    const auto& [family, subset, filter, set_id] = key;
    auto& m = grid[key];
    body.push_back({family, subset, filter, set_id, m["peak"], m["pce"], m["cnn"]});
  }
  out += render_table({"family", "subset", "filter", "set", "peak error %", "pce error %", "cnn error %"}, body);
  return out;
}

}  // namespace corrpost::pipeline
