#include "corrpost/classifier/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "corrpost/common/binary_io.hpp"

namespace corrpost::classifier {

namespace {

// Independent streams derived from the run seed.
constexpr std::uint64_t kSplitStream = 0x5b1f'0001;
constexpr std::uint64_t kInitStream = 0x5b1f'0002;
constexpr std::uint64_t kShuffleStream = 0x5b1f'0003;
constexpr std::uint64_t kAugmentStream = 0x5b1f'0004;

std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

nn::Tensor<float> to_tensor(std::span<const ResponsePatch> patches) {
  nn::Tensor<float> x({patches.size(), 1, kPatchSide, kPatchSide});
  for (std::size_t i = 0; i < patches.size(); ++i) {
    std::copy(patches[i].data.begin(), patches[i].data.end(), x.ptr() + i * kPatchSize);
  }
  return x;
}


}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ParameterError("train: epochs must be >= 1");
  if (batch_size < 2) throw ParameterError("train: batch_size must be >= 2 for batch normalization");
  if (!(l2 >= 0.0)) throw ParameterError("train: l2 must be >= 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ParameterError("train: val_fraction must lie in [0, 1)");
  if (!(adam.lr > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.eps > 0.0)) {
    throw ParameterError("train: invalid Adam settings");
  }
  augment.validate();
  arch.validate();
  if (arch.input_side != kPatchSide) throw ConfigError("train: model input side must match the 32x32 patch");
}

void to_json(nlohmann::ordered_json& j, const TrainConfig& cfg) {
  j = nlohmann::ordered_json{
      {"epochs", cfg.epochs},
      {"batch_size", cfg.batch_size},
      {"l2", cfg.l2},
      {"seed", cfg.seed},
      {"val_fraction", cfg.val_fraction},
      {"optimizer",
       {{"kind", "adam"}, {"lr", cfg.adam.lr}, {"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2}, {"eps", cfg.adam.eps}}},
      {"augment",
       {{"hflip_p", cfg.augment.hflip_p},
        {"vflip_p", cfg.augment.vflip_p},
        {"rot_max_deg", cfg.augment.rot_max_deg},
        {"rotation_interpolation", "bilinear, zero fill"},
        {"noise_sigma_max", cfg.augment.noise_sigma_max}}},
      {"arch",
       {{"base_width", cfg.arch.base_width},
        {"stage_multipliers", cfg.arch.stage_multipliers},
        {"blocks_per_stage", cfg.arch.blocks_per_stage}}},
  };
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

template <typename V>
void read_opt(const nlohmann::json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

}  // namespace

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  try {
    reject_unknown(j, {"epochs", "batch_size", "l2", "seed", "val_fraction", "optimizer", "augment", "arch"}, "train");
    read_opt(j, "epochs", cfg.epochs);
    read_opt(j, "batch_size", cfg.batch_size);
    read_opt(j, "l2", cfg.l2);
    read_opt(j, "seed", cfg.seed);
    read_opt(j, "val_fraction", cfg.val_fraction);
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      reject_unknown(o, {"kind", "lr", "beta1", "beta2", "eps"}, "train.optimizer");
      if (o.value("kind", std::string("adam")) != "adam") throw ConfigError("train.optimizer: only adam is supported");
      read_opt(o, "lr", cfg.adam.lr);
      read_opt(o, "beta1", cfg.adam.beta1);
      read_opt(o, "beta2", cfg.adam.beta2);
      read_opt(o, "eps", cfg.adam.eps);
    }
    if (j.contains("augment")) {
      const auto& a = j.at("augment");
      reject_unknown(a, {"hflip_p", "vflip_p", "rot_max_deg", "rotation_interpolation", "noise_sigma_max"},
                     "train.augment");
      read_opt(a, "hflip_p", cfg.augment.hflip_p);
      read_opt(a, "vflip_p", cfg.augment.vflip_p);
      read_opt(a, "rot_max_deg", cfg.augment.rot_max_deg);
      read_opt(a, "noise_sigma_max", cfg.augment.noise_sigma_max);
    }
    if (j.contains("arch")) {
      const auto& a = j.at("arch");
      reject_unknown(a, {"base_width", "stage_multipliers", "blocks_per_stage"}, "train.arch");
      read_opt(a, "base_width", cfg.arch.base_width);
      read_opt(a, "stage_multipliers", cfg.arch.stage_multipliers);
      read_opt(a, "blocks_per_stage", cfg.arch.blocks_per_stage);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string TrainReport::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json cfg;
  classifier::to_json(cfg, config);
  j["config"] = cfg;
  j["param_count"] = param_count;
  j["split"] = {{"train_true", train_true},
                {"train_false", train_false},
                {"val_true", val_true},
                {"val_false", val_false},
                {"stratified", true},
                {"val_indices", val_indices}};
  auto to_value = [](double v) { return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v); };
  nlohmann::ordered_json loss = nlohmann::ordered_json::array(), bce = loss, tacc = loss, vacc = loss;
  for (const auto& e : epochs) {
    loss.push_back(e.loss);
    bce.push_back(e.bce);
    tacc.push_back(e.train_accuracy);
    vacc.push_back(to_value(e.val_accuracy));
  }
  j["epochs"] = {{"loss", loss}, {"bce", bce}, {"train_accuracy", tacc}, {"val_accuracy", vacc}};
  if (!epochs.empty()) {
    j["final"] = {{"loss", epochs.back().loss},
                  {"train_accuracy", epochs.back().train_accuracy},
                  {"val_accuracy", to_value(epochs.back().val_accuracy)}};
  }
  return j.dump(2) + "\n";
}

TrainedModel train(const LabeledPatches& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.patches.size() != data.labels.size()) throw InputError("train: patch/label count mismatch");
  std::array<std::vector<std::size_t>, 2> by_label;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] > 1) throw InputError("train: labels must be 0 or 1");
    by_label[data.labels[i]].push_back(i);
  }
  if (by_label[0].empty() || by_label[1].empty()) throw InputError("train: dataset needs both true and false samples");

  TrainReport report;
  report.config = cfg;

  // Stratified split; at least one sample per label stays in training.
  std::mt19937_64 split_rng(derive(cfg.seed, kSplitStream));
  std::vector<std::size_t> train_idx;
  for (std::size_t label = 0; label < 2; ++label) {
    auto idx = by_label[label];
    std::shuffle(idx.begin(), idx.end(), split_rng);
    const auto n_val = std::min<std::size_t>(
        idx.size() - 1, static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(idx.size()))));
    report.val_indices.insert(report.val_indices.end(), idx.begin(), idx.begin() + static_cast<long>(n_val));
    train_idx.insert(train_idx.end(), idx.begin() + static_cast<long>(n_val), idx.end());
    (label ? report.val_true : report.val_false) = n_val;
    (label ? report.train_true : report.train_false) = idx.size() - n_val;
  }
  std::sort(report.val_indices.begin(), report.val_indices.end());
  std::sort(train_idx.begin(), train_idx.end());
  if (train_idx.size() < 2) throw InputError("train: fewer than two training samples");

  LabeledPatches val;
  for (auto i : report.val_indices) val.add(data.patches[i], data.labels[i] == 1);

  TrainedModel out{Model(cfg.arch, derive(cfg.seed, kInitStream)), {}};
  Model& model = out.model;
  report.param_count = model.param_count();
  nn::Adam<float> adam(cfg.adam);
  std::mt19937_64 shuffle_rng(derive(cfg.seed, kShuffleStream));
  std::mt19937_64 augment_rng(derive(cfg.seed, kAugmentStream));
  const float l2 = static_cast<float>(cfg.l2);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);
    // Batch boundaries; a trailing batch of one merges into its predecessor.
    std::vector<std::size_t> bounds;
    for (std::size_t b = 0; b < train_idx.size(); b += cfg.batch_size) bounds.push_back(b);
    if (train_idx.size() - bounds.back() < 2) bounds.pop_back();
    bounds.push_back(train_idx.size());

    double loss_sum = 0.0, bce_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
      const std::size_t begin = bounds[k], end = bounds[k + 1];
      std::vector<ResponsePatch> batch;
      nn::Tensor<float> labels({end - begin});
      for (std::size_t s = begin; s < end; ++s) {
        batch.push_back(augment(data.patches[train_idx[s]], cfg.augment, augment_rng));
        labels[s - begin] = static_cast<float>(data.labels[train_idx[s]]);
      }
      const nn::Tensor<float> pred = model.forward(to_tensor(batch), nn::Mode::kTrain);
      const double bce_value = nn::bce(pred, labels);
      const double loss = model.loss(labels, l2);
      if (!std::isfinite(loss)) {
        throw DivergenceError("train: non-finite loss in epoch " + std::to_string(epoch + 1), static_cast<int>(epoch + 1));
      }
      for (std::size_t s = 0; s < pred.size(); ++s) correct += (pred[s] >= kDecisionThreshold) == (labels[s] > 0.5f);
      loss_sum += loss * static_cast<double>(end - begin);
      bce_sum += bce_value * static_cast<double>(end - begin);
      model.backward(labels, l2);
      try {
        adam.step(model.trainable_parameters());
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " in epoch " + std::to_string(epoch + 1), static_cast<int>(epoch + 1));
      }
    }
    const double n = static_cast<double>(train_idx.size());
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.loss = loss_sum / n;
    rec.bce = bce_sum / n;
    rec.train_accuracy = static_cast<double>(correct) / n;
    rec.val_accuracy = val.size() ? accuracy(model, val) : std::numeric_limits<double>::quiet_NaN();
    report.epochs.push_back(rec);
  }
  out.report = std::move(report);
  return out;
}

void save_trained(const std::filesystem::path& dir, TrainedModel& trained) {
  nn::save_checkpoint(dir / "model.cnnw", trained.model);
  binio::write_file(dir / "architecture.json", nn::architecture_json(trained.model));
  binio::write_file(dir / "train_report.json", trained.report.to_json());
}

Model load_trained(const std::filesystem::path& dir) {
  const auto arch = binio::read_file(dir / "architecture.json");
  Model model(nn::arch_spec_from_json(std::string_view(arch.data(), arch.size())));
  nn::load_checkpoint(dir / "model.cnnw", model);
  return model;
}

double score(Model& model, const ResponsePatch& patch) {
  const ResponsePatch one[] = {patch};
  return model.forward(to_tensor(one), nn::Mode::kInfer)[0];
}

std::vector<double> scores(Model& model, std::span<const ResponsePatch> patches) {
  std::vector<double> out;
  out.reserve(patches.size());
  constexpr std::size_t kChunk = 64;
  for (std::size_t b = 0; b < patches.size(); b += kChunk) {
    const auto chunk = patches.subspan(b, std::min(kChunk, patches.size() - b));
    const auto y = model.forward(to_tensor(chunk), nn::Mode::kInfer);
    out.insert(out.end(), y.data().begin(), y.data().end());
  }
  return out;
}

Prediction predict(Model& model, const ResponsePatch& patch, double threshold) {
  const double s = score(model, patch);
  return {s >= threshold, s};
}

double accuracy(Model& model, const LabeledPatches& data, double threshold) {
  if (data.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  const auto s = scores(model, data.patches);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < s.size(); ++i) correct += (s[i] >= threshold) == (data.labels[i] == 1);
  return static_cast<double>(correct) / static_cast<double>(s.size());
}

}  // namespace corrpost::classifier
