#include <algorithm>
#include <cstdio>
#include <random>
#include <set>

#include "corrpost/common/binary_io.hpp"
#include "corrpost/common/parallel.hpp"
#include "corrpost/common/sha256.hpp"
#include "corrpost/synthdata/synthdata.hpp"

namespace corrpost::synth {

namespace {

std::uint64_t image_seed(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::string image_path(Family f, const ObjectClass& cls, std::uint32_t res, std::uint32_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "%04u.pgm", index);
  return std::string(to_string(f)) + "/" + cls.name + "/" + std::to_string(res) + "/" + name;
}

}  // namespace

void DatasetManifest::validate() const {
  if (classes.empty()) throw ConfigError("manifest: no classes");
  std::set<std::uint32_t> ids;
  for (const auto& c : classes) {
    if (!ids.insert(c.class_id).second) throw ConfigError("manifest: duplicate class_id " + std::to_string(c.class_id));
    if (c.count_per_resolution == 0) throw ConfigError("manifest: class counts must be > 0");
    catalogue_class(family, c.class_id).validate();
  }
  for (std::size_t a = 0; a < classes.size(); ++a)
    for (std::size_t b = a + 1; b < classes.size(); ++b) {
      if (geometry_distance(catalogue_class(family, classes[a].class_id), catalogue_class(family, classes[b].class_id)) <
          kMinGeometryDistance) {
        throw GeometryError("manifest: classes " + std::to_string(classes[a].class_id) + " and " +
                            std::to_string(classes[b].class_id) + " have near-identical geometry");
      }
    }
  if (resolutions.empty()) throw ConfigError("manifest: no resolutions");
  std::set<std::uint32_t> seen;
  for (auto r : resolutions) {
    if (std::find(std::begin(kResolutions), std::end(kResolutions), r) == std::end(kResolutions)) {
      throw ConfigError("manifest: resolution " + std::to_string(r) + " not in {256,128,64,32}");
    }
    if (!seen.insert(r).second) throw ConfigError("manifest: duplicate resolution");
  }
  if (!(rotation_min >= 0.0 && rotation_min < rotation_max && rotation_max <= 360.0)) {
    throw ConfigError("manifest: rotation range must satisfy 0 <= min < max <= 360");
  }
  if (crop_mode != "center" && crop_mode != "peak") throw ConfigError("manifest: crop_mode must be center or peak");
  scene.validate();
}

std::size_t DatasetManifest::expected_count() const {
  std::size_t n = 0;
  for (const auto& c : classes) n += c.count_per_resolution * resolutions.size();
  return n;
}

double rotation_for(const DatasetManifest& m, std::size_t index, std::size_t count) {
  return m.rotation_min + (static_cast<double>(index) + 0.5) * (m.rotation_max - m.rotation_min) / count;
}

std::vector<ImageEntry> plan_images(const DatasetManifest& m) {
  std::vector<ImageEntry> out;
  std::uint64_t global = 0;
  for (const auto& c : m.classes) {
    const auto& cls = catalogue_class(m.family, c.class_id);
    for (auto res : m.resolutions) {
      for (std::size_t i = 0; i < c.count_per_resolution; ++i, ++global) {
        ImageEntry e;
        e.class_id = c.class_id;
        e.is_true = c.is_true;
        e.resolution = res;
        e.index = static_cast<std::uint32_t>(i);
        e.rotation_deg = rotation_for(m, i, c.count_per_resolution);
        e.background_seed = image_seed(m.seed, global);
        e.path = image_path(m.family, cls, res, e.index);
        out.push_back(std::move(e));
      }
    }
  }
  return out;
}

DatasetManifest default_manifest(Family f, std::uint64_t seed) {
  DatasetManifest m;
  m.family = f;
  m.seed = seed;
  m.classes = {{0, true, 180}, {1, false, 90}, {2, false, 90}, {3, false, 90}};
  return m;
}

std::filesystem::path manifest_path(const std::filesystem::path& root, Family f) {
  return root / std::string(to_string(f)) / "manifest.json";
}

DatasetManifest generate_corpus(const DatasetManifest& m, const std::filesystem::path& root, unsigned threads) {
  m.validate();
  DatasetManifest out = m;
  out.images = plan_images(m);
  parallel_for(out.images.size(), threads, [&](std::size_t i) {
    auto& e = out.images[i];
    const Image2D img = render_scene(catalogue_class(m.family, e.class_id), e.resolution, e.rotation_deg,
                                     e.background_seed, m.scene);
    const std::string bytes = encode_pgm(img);
    e.sha256 = to_hex(sha256(bytes));
    binio::write_file(root / e.path, bytes);
  });
  binio::write_file(manifest_path(root, m.family), out.to_json().dump(2) + "\n");
  return out;
}

void verify_corpus(const DatasetManifest& m, const std::filesystem::path& root) {
  if (m.images.size() != m.expected_count()) throw IoError("manifest lists an unexpected number of images");
  for (const auto& e : m.images) {
    const auto bytes = binio::read_file(root / e.path);
    if (to_hex(sha256(std::string_view(bytes.data(), bytes.size()))) != e.sha256) {
      throw IoError("hash mismatch for " + e.path);
    }
  }
}

nlohmann::ordered_json DatasetManifest::to_json() const {
  nlohmann::ordered_json j;
  j["family"] = std::string(synth::to_string(family));
  j["seed"] = seed;
  j["resolutions"] = resolutions;
  j["rotation"] = {{"min_deg", rotation_min}, {"max_deg", rotation_max}, {"assignment", "stratified by index"}};
  const auto& b = scene.background;
  j["scene"] = {{"object_scale", scene.object_scale},
                {"albedo_jitter", scene.albedo_jitter},
                {"supersample", scene.supersample},
                {"sensor_noise", scene.sensor_noise},
                {"background",
                 {{"kind", "value_noise"},
                  {"cells", b.cells},
                  {"octaves", b.octaves},
                  {"level_min", b.level_min},
                  {"level_max", b.level_max},
                  {"contrast_min", b.contrast_min},
                  {"contrast_max", b.contrast_max}}}};
  j["crop_mode"] = crop_mode;
  auto& cls = j["classes"] = nlohmann::ordered_json::array();
  for (const auto& c : classes) {
    const auto& oc = catalogue_class(family, c.class_id);
    cls.push_back({{"class_id", c.class_id},
                   {"name", oc.name},
                   {"role", c.is_true ? "true" : "false"},
                   {"albedo", oc.albedo},
                   {"count_per_resolution", c.count_per_resolution}});
  }
  auto& imgs = j["images"] = nlohmann::ordered_json::array();
  for (const auto& e : images) {
    imgs.push_back({{"path", e.path},
                    {"class_id", e.class_id},
                    {"is_true", e.is_true},
                    {"resolution", e.resolution},
                    {"index", e.index},
                    {"rotation_deg", e.rotation_deg},
                    {"background_seed", e.background_seed},
                    {"sha256", e.sha256}});
  }
  j["filters"] = filters;
  return j;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.family = family_from_string(j.at("family").get<std::string>());
    m.seed = j.value("seed", m.seed);
    if (j.contains("resolutions")) m.resolutions = j.at("resolutions").get<std::vector<std::uint32_t>>();
    if (j.contains("rotation")) {
      m.rotation_min = j.at("rotation").value("min_deg", m.rotation_min);
      m.rotation_max = j.at("rotation").value("max_deg", m.rotation_max);
    }
    if (j.contains("scene")) {
      const auto& s = j.at("scene");
      m.scene.object_scale = s.value("object_scale", m.scene.object_scale);
      m.scene.albedo_jitter = s.value("albedo_jitter", m.scene.albedo_jitter);
      m.scene.supersample = s.value("supersample", m.scene.supersample);
      m.scene.sensor_noise = s.value("sensor_noise", m.scene.sensor_noise);
      if (s.contains("background")) {
        const auto& b = s.at("background");
        auto& bg = m.scene.background;
        bg.cells = b.value("cells", bg.cells);
        bg.octaves = b.value("octaves", bg.octaves);
        bg.level_min = b.value("level_min", bg.level_min);
        bg.level_max = b.value("level_max", bg.level_max);
        bg.contrast_min = b.value("contrast_min", bg.contrast_min);
        bg.contrast_max = b.value("contrast_max", bg.contrast_max);
      }
    }
    m.crop_mode = j.value("crop_mode", m.crop_mode);
    for (const auto& c : j.at("classes")) {
      ClassSpec spec;
      spec.class_id = c.at("class_id").get<std::uint32_t>();
      spec.is_true = c.value("role", std::string("false")) == "true";
      spec.count_per_resolution = c.at("count_per_resolution").get<std::size_t>();
      m.classes.push_back(spec);
    }
    if (j.contains("images")) {
      for (const auto& e : j.at("images")) {
        ImageEntry img;
        img.path = e.at("path").get<std::string>();
        img.class_id = e.at("class_id").get<std::uint32_t>();
        img.is_true = e.at("is_true").get<bool>();
        img.resolution = e.at("resolution").get<std::uint32_t>();
        img.index = e.at("index").get<std::uint32_t>();
        img.rotation_deg = e.at("rotation_deg").get<double>();
        img.background_seed = e.at("background_seed").get<std::uint64_t>();
        img.sha256 = e.at("sha256").get<std::string>();
        m.images.push_back(std::move(img));
      }
    }
    if (j.contains("filters")) m.filters = j.at("filters").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  try {
    return DatasetManifest::from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (Error& e) {
    e.prepend(path.string());
    throw;
  }
}

}  // namespace corrpost::synth
