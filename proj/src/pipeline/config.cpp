#include "corrpost/pipeline/config.hpp"

#include <random>
#include <set>

#include "corrpost/common/binary_io.hpp"
#include "corrpost/common/sha256.hpp"

namespace corrpost::pipeline {

namespace {

constexpr std::uint64_t kFaceSeedStream = 0xFACE;

nlohmann::ordered_json manifest_settings(const synth::DatasetManifest& m) {
  auto j = m.to_json();
  j.erase("images");
  j.erase("filters");
  j.erase("crop_mode");
  return j;
}

// Every key in `user` must exist in `reference`; objects recurse, except
// free-form maps listed in `open`.
void check_keys(const nlohmann::json& user, const nlohmann::json& reference, const std::string& where) {
  if (!user.is_object()) return;
  if (!reference.is_object()) throw ConfigError("config: '" + where + "' is not an object");
  static const std::set<std::string> open = {"filters.train_per_resolution", "data.vehicles.classes",
                                             "data.faces.classes", "data.vehicles.resolutions",
                                             "data.faces.resolutions", "train.arch.stage_multipliers"};
  for (const auto& [key, value] : user.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!reference.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    if (open.count(path) == 0) check_keys(value, reference.at(key), path);
  }
}

}  // namespace

std::size_t FilterSettings::train_count(std::uint32_t resolution) const {
  const auto it = train_per_resolution.find(resolution);
  if (it == train_per_resolution.end()) {
    throw ConfigError("filters: no training count for resolution " + std::to_string(resolution));
  }
  return it->second;
}

void PipelineConfig::validate() const {
  vehicles.validate();
  faces.validate();
  if (vehicles.family != synth::Family::kVehicleShapes) throw ConfigError("data.vehicles must be vehicle_shapes");
  if (faces.family != synth::Family::kFaceBlobs) throw ConfigError("data.faces must be face_blobs");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!(filters.alpha >= 0 && filters.beta >= 0 && filters.gamma >= 0) ||
      filters.alpha + filters.beta + filters.gamma <= 0) {
    throw ParameterError("filters.otmach: weights must be >= 0 and not all zero");
  }
  if (!(filters.minace_noise_fraction >= 0.0)) throw ParameterError("filters.minace.noise_fraction must be >= 0");
  for (const auto* m : {&vehicles, &faces}) {
    const bool has_true = std::any_of(m->classes.begin(), m->classes.end(), [](const auto& c) { return c.is_true; });
    const bool has_false = std::any_of(m->classes.begin(), m->classes.end(), [](const auto& c) { return !c.is_true; });
    if (!has_true || !has_false) {
      throw ConfigError("data." + std::string(synth::to_string(m->family)) + ": evaluation needs true and false classes");
    }
    for (const auto& c : m->classes) {
      if (!c.is_true) continue;
      for (auto res : m->resolutions) {
        const std::size_t n = filters.train_count(res);
        if (n < 1 || n + 2 > c.count_per_resolution) {
          throw ConfigError("filters.train_per_resolution[" + std::to_string(res) +
                            "] must leave at least two true images per resolution");
        }
      }
    }
  }
  bool held_out_ok = false, trainable_false = false;
  for (const auto& c : vehicles.classes) {
    if (c.class_id == eval.held_out_class) held_out_ok = !c.is_true;
    else trainable_false |= !c.is_true;
  }
  if (!held_out_ok) throw ConfigError("eval.held_out_class must name a false vehicle class");
  if (!trainable_false) throw ConfigError("CNN training needs a false class besides the held-out one");
  if (!(eval.low_error_pct >= 0.0 && eval.low_error_pct < eval.high_error_pct && eval.high_error_pct <= 100.0)) {
    throw ConfigError("eval: bucket bounds must satisfy 0 <= low < high <= 100");
  }
  if (!(cross_domain.calibration_fraction > 0.0 && cross_domain.calibration_fraction < 1.0)) {
    throw ConfigError("cross_domain.calibration_fraction must lie in (0, 1)");
  }
  train.validate();
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["crop_mode"] = std::string(corrpost::to_string(crop_mode));
  j["data"] = {{"vehicles", manifest_settings(vehicles)}, {"faces", manifest_settings(faces)}};
  nlohmann::ordered_json per_res = nlohmann::ordered_json::object();
  for (auto it = filters.train_per_resolution.rbegin(); it != filters.train_per_resolution.rend(); ++it) {
    per_res[std::to_string(it->first)] = it->second;
  }
  j["filters"] = {{"otmach", {{"alpha", filters.alpha}, {"beta", filters.beta}, {"gamma", filters.gamma}}},
                  {"minace", {{"noise_fraction", filters.minace_noise_fraction}}},
                  {"train_per_resolution", per_res},
                  {"zero_mean", filters.zero_mean}};
  nlohmann::ordered_json t;
  classifier::to_json(t, train);
  j["train"] = t;
  j["eval"] = {{"set_definition", "class_resolution"},
               {"low_error_pct", eval.low_error_pct},
               {"high_error_pct", eval.high_error_pct},
               {"held_out_class", eval.held_out_class}};
  j["cross_domain"] = {{"enabled", cross_domain.enabled}, {"calibration_fraction", cross_domain.calibration_fraction}};
  return j;
}

std::string PipelineConfig::digest() const { return to_hex(sha256(to_json().dump())); }

void apply_seed(PipelineConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.vehicles.seed = seed;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(kFaceSeedStream)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  cfg.faces.seed = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
  cfg.train.seed = seed;
}

PipelineConfig default_config() {
  PipelineConfig cfg;
  cfg.vehicles = synth::default_manifest(synth::Family::kVehicleShapes, 1);
  cfg.vehicles.rotation_max = 30.0;
  cfg.faces = synth::default_manifest(synth::Family::kFaceBlobs, 1);
  cfg.faces.rotation_max = 30.0;
  apply_seed(cfg, 1);
  return cfg;
}

PipelineConfig config_from_json(const nlohmann::json& user) {
  if (!user.is_object()) throw ConfigError("config: expected a JSON object");
  const PipelineConfig defaults = default_config();
  const nlohmann::json reference = nlohmann::json::parse(defaults.to_json().dump());
  check_keys(user, reference, "");
  nlohmann::json merged = reference;
  merged.merge_patch(user);
  // Replace (not merge) free-form maps so entries can be removed.
  if (user.contains("filters") && user["filters"].contains("train_per_resolution")) {
    merged["filters"]["train_per_resolution"] = user["filters"]["train_per_resolution"];
  }

  PipelineConfig cfg = defaults;
  try {
    cfg.crop_mode = crop_mode_from_string(merged.at("crop_mode").get<std::string>());
    auto manifest = [&](const char* name) {
      nlohmann::json m = merged.at("data").at(name);
      return synth::DatasetManifest::from_json(m);
    };
    cfg.vehicles = manifest("vehicles");
    cfg.faces = manifest("faces");
    cfg.vehicles.crop_mode = cfg.faces.crop_mode = std::string(corrpost::to_string(cfg.crop_mode));
    const auto& f = merged.at("filters");
    cfg.filters.alpha = f.at("otmach").at("alpha").get<double>();
    cfg.filters.beta = f.at("otmach").at("beta").get<double>();
    cfg.filters.gamma = f.at("otmach").at("gamma").get<double>();
    cfg.filters.minace_noise_fraction = f.at("minace").at("noise_fraction").get<double>();
    cfg.filters.zero_mean = f.at("zero_mean").get<bool>();
    cfg.filters.train_per_resolution.clear();
    for (const auto& [key, value] : f.at("train_per_resolution").items()) {
      cfg.filters.train_per_resolution[static_cast<std::uint32_t>(std::stoul(key))] = value.get<std::size_t>();
    }
    cfg.train = classifier::train_config_from_json(merged.at("train"));
    const auto& e = merged.at("eval");
    if (e.at("set_definition").get<std::string>() != "class_resolution") {
      throw ConfigError("eval.set_definition: only class_resolution is supported");
    }
    cfg.eval.low_error_pct = e.at("low_error_pct").get<double>();
    cfg.eval.high_error_pct = e.at("high_error_pct").get<double>();
    cfg.eval.held_out_class = e.at("held_out_class").get<std::uint32_t>();
    cfg.cross_domain.enabled = merged.at("cross_domain").at("enabled").get<bool>();
    cfg.cross_domain.calibration_fraction = merged.at("cross_domain").at("calibration_fraction").get<double>();
    apply_seed(cfg, merged.at("seed").get<std::uint64_t>());
    // Derived seeds may be echoed back but not changed.
    const std::pair<const char*, std::uint64_t> derived[] = {{"/data/vehicles/seed", cfg.vehicles.seed},
                                                             {"/data/faces/seed", cfg.faces.seed},
                                                             {"/train/seed", cfg.train.seed}};
    for (const auto& [ptr, value] : derived) {
      const nlohmann::json::json_pointer p(ptr);
      if (user.contains(p) && user.at(p).get<std::uint64_t>() != value) {
        throw ConfigError(std::string("config: ") + ptr + " is derived from the top-level seed");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ConfigError("config: train_per_resolution keys must be resolutions");
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  try {
    return config_from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (Error& e) {
    e.prepend(path.string());
    throw;
  }
}

}  // namespace corrpost::pipeline
