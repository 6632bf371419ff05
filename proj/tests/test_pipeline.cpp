#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "corrpost/classifier/classifier.hpp"
#include "corrpost/common/binary_io.hpp"
#include "corrpost/pipeline/baseline.hpp"
#include "corrpost/pipeline/config.hpp"
#include "corrpost/pipeline/report.hpp"
#include "corrpost/pipeline/stages.hpp"

using namespace corrpost;
using namespace corrpost::pipeline;
namespace fs = std::filesystem;

namespace {

// Exhaustive sweep: every score (and +inf) as a ">= t" threshold.
std::size_t oracle_min_errors(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  std::vector<double> candidates = s;
  candidates.push_back(std::numeric_limits<double>::infinity());
  std::size_t best = s.size();
  for (double t : candidates) {
    std::size_t e = 0;
    for (std::size_t i = 0; i < s.size(); ++i) e += (s[i] >= t) != (y[i] != 0);
    best = std::min(best, e);
  }
  return best;
}

std::string slurp(const fs::path& p) {
  const auto b = binio::read_file(p);
  return std::string(b.begin(), b.end());
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("corrpost_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

// Small enough to run the whole pipeline in seconds.
PipelineConfig tiny_config() {
  PipelineConfig cfg = default_config();
  for (auto* m : {&cfg.vehicles, &cfg.faces}) {
    m->resolutions = {64, 32};
    m->classes = {{0, true, 12}, {1, false, 6}, {2, false, 6}, {3, false, 6}};
  }
  cfg.filters.train_per_resolution = {{64, 3}, {32, 3}};
  cfg.train.epochs = 2;
  cfg.train.batch_size = 8;
  cfg.train.arch = nn::ArchSpec{4, {1, 2}, 1, 32};
  cfg.validate();
  return cfg;
}

}  // namespace

TEST_CASE("threshold: perfectly separated scores") {
  const std::vector<double> s = {0.9, 1.0, 0.1, 0.2};
  const std::vector<std::uint8_t> y = {1, 1, 0, 0};
  const auto t = fit_threshold(s, y);
  CHECK(t.value > 0.2);
  CHECK(t.value < 0.9);
  CHECK(t.value == doctest::Approx(0.55));
  CHECK(t.calibration_accuracy == 1.0);
  CHECK(count_errors(s, y, t.value) == 0);
}

TEST_CASE("threshold: identical scores on balanced data give 50% error") {
  const std::vector<double> s(10, 0.42);
  std::vector<std::uint8_t> y(10, 0);
  for (std::size_t i = 0; i < 5; ++i) y[i] = 1;
  const auto t = fit_threshold(s, y);
  CHECK(t.calibration_accuracy == 0.5);
  CHECK(count_errors(s, y, t.value) == 5);
}

TEST_CASE("threshold: matches the exhaustive sweep oracle on random scores") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 40;
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    std::uniform_int_distribution<int> level(0, 9);  // ties are common
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<std::uint8_t>(i % 2);
      s[i] = 0.1 * level(rng) + 0.05 * y[i];
    }
    std::shuffle(y.begin(), y.end(), rng);
    const auto t = fit_threshold(s, y);
    const std::size_t oracle = oracle_min_errors(s, y);
    CHECK(count_errors(s, y, t.value) == oracle);
    CHECK(t.calibration_accuracy == doctest::Approx(1.0 - static_cast<double>(oracle) / n));
  }
}

TEST_CASE("threshold: input errors") {
  const std::vector<double> s = {0.1, 0.2};
  CHECK_THROWS_AS(fit_threshold(s, std::vector<std::uint8_t>{1, 1}), InputError);
  CHECK_THROWS_AS(fit_threshold(s, std::vector<std::uint8_t>{0, 0}), InputError);
  CHECK_THROWS_AS(fit_threshold(s, std::vector<std::uint8_t>{1}), ParameterError);
  CHECK_THROWS_AS(fit_threshold(std::vector<double>{NAN, 0.2}, std::vector<std::uint8_t>{1, 0}), ParameterError);
}

TEST_CASE("report csv: round trip, empty input, tampering") {
  std::mt19937_64 rng(3);
  std::vector<SetRow> rows;
  for (int i = 0; i < 50; ++i) {
    SetRow r;
    r.method = i % 3 == 0 ? "peak" : i % 3 == 1 ? "pce" : "cnn";
    r.filter = i % 2 ? "otmach" : "minace";
    r.family = "vehicle_shapes";
    r.subset = "test";
    r.set_id = "t72@" + std::to_string(32 << (i % 4));
    r.class_id = i % 4;
    r.resolution = 32u << (i % 4);
    r.is_true = i % 4 == 0;
    r.n = 1 + rng() % 97;
    r.errors = rng() % (r.n + 1);
    rows.push_back(r);
  }
  const std::string text = encode_report_csv(rows);
  const auto back = decode_report_csv(text);
  CHECK(back == rows);
  CHECK(encode_report_csv(back) == text);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(back[i].error_pct() == rows[i].error_pct());

  const std::string empty = encode_report_csv({});
  CHECK(std::count(empty.begin(), empty.end(), '\n') == 1);
  CHECK(empty.rfind("method,filter,", 0) == 0);
  CHECK(decode_report_csv(empty).empty());

  std::string bad = text;
  bad.replace(bad.rfind(','), std::string::npos, ",101\n");
  CHECK_THROWS_AS(decode_report_csv(bad), IoError);
  CHECK_THROWS_AS(decode_report_csv("not,a,header\n"), IoError);
}

TEST_CASE("report buckets partition the sets and reproduce the means") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SetRow> rows(rng() % 30);
    double total = 0.0, other = 0.0;
    std::size_t n_other = 0;
    for (auto& r : rows) {
      r.n = 1 + rng() % 10;
      r.errors = rng() % 3 == 0 ? 0 : rng() % (r.n + 1);
      total += r.error_pct();
      if (r.error_pct() >= 0.001 && r.error_pct() <= 25.0) other += r.error_pct(), ++n_other;
    }
    const auto s = summarize(rows, 0.001, 25.0);
    CHECK(s.low + s.high + s.other == rows.size());
    CHECK(s.sets == rows.size());
    CHECK(s.other == n_other);
    CHECK(s.mean_pct.has_value() == !rows.empty());
    if (!rows.empty()) CHECK(*s.mean_pct == doctest::Approx(total / rows.size()));
    if (n_other) CHECK(*s.other_mean_pct == doctest::Approx(other / n_other));
  }
  SetRow edge;
  edge.n = 4;
  edge.errors = 1;  // exactly 25% is not "> 25%"
  CHECK(summarize({edge}, 0.001, 25.0).other == 1);
}

TEST_CASE("config: defaults, json overlay and validation") {
  const auto cfg = default_config();
  CHECK_NOTHROW(cfg.validate());
  const auto back = config_from_json(nlohmann::json::parse(cfg.to_json().dump()));
  CHECK(back.digest() == cfg.digest());
  CHECK(config_from_json(nlohmann::json::object()).digest() == cfg.digest());

  auto threads = cfg;
  threads.threads = 8;
  CHECK(threads.digest() == cfg.digest());

  const auto seeded = config_from_json({{"seed", 9}});
  CHECK(seeded.vehicles.seed == 9);
  CHECK(seeded.train.seed == 9);
  CHECK(seeded.faces.seed != cfg.faces.seed);
  CHECK(seeded.digest() != cfg.digest());

  const auto epochs = config_from_json({{"train", {{"epochs", 3}}}});
  CHECK(epochs.train.epochs == 3);
  CHECK(epochs.train.batch_size == cfg.train.batch_size);

  CHECK_THROWS_AS(config_from_json({{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"filters", {{"otmach", {{"delta", 1}}}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"train", {{"seed", 3}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"eval", {{"held_out_class", 0}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"filters", {{"train_per_resolution", {{"256", 32}}}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::array()), ConfigError);

  // Evaluation needs both labels.
  nlohmann::json true_only = {
      {"data", {{"vehicles", {{"classes", {{{"class_id", 0}, {"role", "true"}, {"count_per_resolution", 60}}}}}}}}};
  CHECK_THROWS_AS(config_from_json(true_only), ConfigError);
}

TEST_CASE("roles: every sample has one role and the held-out class never trains the CNN") {
  const auto cfg = default_config();
  const auto samples = assign_roles(cfg.vehicles, cfg);
  CHECK(samples.size() == cfg.vehicles.expected_count());
  std::set<std::string> ids;
  std::map<std::uint32_t, std::size_t> filter_train;
  std::size_t cnn_true = 0, test_true = 0;
  for (const auto& s : samples) {
    CHECK(ids.insert(s.sample_id).second);
    if (s.role == Role::kFilterTrain) {
      CHECK(s.entry.is_true);
      ++filter_train[s.entry.resolution];
    }
    if (s.entry.class_id == cfg.eval.held_out_class) CHECK(s.role == Role::kTest);
    if (!s.entry.is_true && s.entry.class_id != cfg.eval.held_out_class) CHECK(s.role == Role::kCnnTrain);
    CHECK(s.role != Role::kCalibration);
    cnn_true += s.entry.is_true && s.role == Role::kCnnTrain;
    test_true += s.entry.is_true && s.role == Role::kTest;
  }
  for (auto res : cfg.vehicles.resolutions) CHECK(filter_train[res] == cfg.filters.train_count(res));
  CHECK(cnn_true >= test_true);
  CHECK(cnn_true - test_true <= cfg.vehicles.resolutions.size());

  // Filter training images are spread over the rotation range.
  std::vector<double> angles;
  for (const auto& s : samples) {
    if (s.role == Role::kFilterTrain && s.entry.resolution == 256) angles.push_back(s.entry.rotation_deg);
  }
  std::sort(angles.begin(), angles.end());
  const double span = cfg.vehicles.rotation_max - cfg.vehicles.rotation_min;
  CHECK(angles.front() < cfg.vehicles.rotation_min + span / angles.size());
  CHECK(angles.back() > cfg.vehicles.rotation_max - span / angles.size());

  const auto faces = assign_roles(cfg.faces, cfg);
  std::size_t calib = 0, eval = 0;
  for (const auto& s : faces) {
    CHECK((s.role == Role::kFilterTrain || s.role == Role::kCalibration || s.role == Role::kEvaluation));
    calib += s.role == Role::kCalibration;
    eval += s.role == Role::kEvaluation;
  }
  CHECK(calib >= eval);
  CHECK(calib - eval <= 16);
}

TEST_CASE("pipeline: end-to-end on a tiny corpus is reproducible and self-consistent") {
  const auto cfg = tiny_config();
  const fs::path a = temp_dir("a"), b = temp_dir("b");
  Pipeline pa(cfg, a), pb(cfg, b);
  pa.run(Stage::kEval);
  pb.run(Stage::kEval);
  for (const char* f : {"eval/eval_report.json", "eval/report.csv", "eval/report.txt", "cnn/model.cnnw"}) {
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  }
  for (Stage s : kAllStages) CHECK(pa.is_current(s));

  const auto report = nlohmann::json::parse(slurp(a / "eval/eval_report.json"));
  const auto rows = decode_report_csv(slurp(a / "eval/report.csv"));
  // 3 methods x 2 filters x 4 sets per subset, vehicles train(3 classes) + test(2) plus faces.
  std::size_t vehicle_rows = 0, face_rows = 0;
  for (const auto& r : rows) (r.family == "vehicle_shapes" ? vehicle_rows : face_rows)++;
  CHECK(vehicle_rows == 3 * 2 * 2 * (3 + 2));
  CHECK(face_rows == 3 * 2 * 2 * 4);

  // Summaries recompute exactly from the per-set rows.
  for (const auto& s : report["summary"]["test"]) {
    std::vector<SetRow> sel;
    for (const auto& r : rows) {
      if (r.family == "vehicle_shapes" && r.subset == "test" && r.method == s["method"] &&
          (s["filter"] == "both" || r.filter == s["filter"])) {
        sel.push_back(r);
      }
    }
    const auto sum = summarize(sel, 0.001, 25.0);
    CHECK(s["sets"] == sum.sets);
    CHECK(s["error_below_low"] == sum.low);
    CHECK(s["error_above_high"] == sum.high);
    CHECK(s["other"] == sum.other);
  }
  for (const auto& r : rows) {
    CHECK(r.error_pct() >= 0.0);
    CHECK(r.error_pct() <= 100.0);
  }

  // Lineage: the held-out class has no CNN-training samples.
  for (const auto& set : report["lineage"]["vehicle_shapes"]) {
    if (set["set_id"].get<std::string>().rfind("chieftain@", 0) == 0) CHECK_FALSE(set.contains("cnn_train"));
  }
  const auto avg = report["cross_domain"]["average_error_pct"];
  CHECK(avg.size() == 3);
  CHECK(avg.contains("peak"));
  CHECK(avg.contains("pce"));
  CHECK(avg.contains("cnn"));

  fs::remove_all(b);
}

TEST_CASE("pipeline: stage stamps, stale configs and missing artifacts") {
  auto cfg = tiny_config();
  const fs::path dir = temp_dir("stamps");
  {
    Pipeline p(cfg, dir);
    p.run(Stage::kPrep);
    CHECK(p.is_current(Stage::kGenData));
    CHECK(p.is_current(Stage::kPrep));
    CHECK_FALSE(p.is_current(Stage::kTrainFilter));
  }
  {
    // A training-only change leaves data and prep current.
    auto changed = cfg;
    changed.train.epochs = 3;
    Pipeline p(changed, dir);
    CHECK(p.is_current(Stage::kGenData));
    CHECK(p.is_current(Stage::kPrep));
    CHECK(p.stage_digest(Stage::kTrainCnn) != Pipeline(cfg, dir).stage_digest(Stage::kTrainCnn));
  }
  {
    auto reseeded = cfg;
    apply_seed(reseeded, 99);
    Pipeline p(reseeded, dir);
    CHECK_FALSE(p.is_current(Stage::kGenData));
  }
  {
    // Stamp says current but the corpus is gone.
    fs::remove(dir / "data" / "vehicle_shapes" / "manifest.json");
    Pipeline p(cfg, dir);
    CHECK_THROWS_AS(p.run(Stage::kTrainFilter), ConfigError);
    try {
      p.run(Stage::kTrainFilter);
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("stage train-filter") == 0);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("frozen model scores identical patches identically in every copy") {
  classifier::TrainedModel trained{classifier::Model(nn::ArchSpec{4, {1, 2}, 1, 32}, 3), {}};
  const fs::path dir = temp_dir("frozen");
  fs::create_directories(dir);
  classifier::save_trained(dir, trained);
  auto m1 = classifier::load_trained(dir);
  auto m2 = classifier::load_trained(dir);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ResponsePatch p;
  for (auto& v : p.data) v = u(rng);
  const double s1 = classifier::score(m1, p);
  CHECK(classifier::score(m2, p) == s1);
  const std::vector<ResponsePatch> many = {p, p, p};
  for (double s : classifier::scores(m2, many)) CHECK(s == s1);
  fs::remove_all(dir);
}
