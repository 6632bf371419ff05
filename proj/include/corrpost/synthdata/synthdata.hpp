#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "corrpost/imagefft/image.hpp"

namespace corrpost::synth {

enum class Family { kVehicleShapes, kFaceBlobs };

std::string_view to_string(Family f);
Family family_from_string(std::string_view s);

struct Point {
  double x, y;
};

/// Filled polygon whose gray level is the class albedo plus `shade`; later
/// shapes paint over earlier ones.
struct Shape {
  std::vector<Point> vertices;
  double shade = 0.0;
};

/// Anisotropic Gaussian in object units. Positive amplitudes build the
/// silhouette; negative ones shade features inside it.
struct Blob {
  double cx, cy, sx, sy, amplitude;
};

/// Parametric object in object units (roughly [-1, 1] across), rendered at
/// the image center. Vehicles are unions of polygons; faces are blob
/// mixtures.
struct ObjectClass {
  Family family = Family::kVehicleShapes;
  std::uint32_t class_id = 0;
  std::string name;
  std::vector<Shape> shapes;
  std::vector<Blob> blobs;
  double albedo = 0.7;

  /// Throws GeometryError on zero-area polygons or non-positive blob widths.
  void validate() const;
};

/// Built-in catalogue; class 0 plays the true-object role.
std::vector<ObjectClass> catalogue(Family f);
const ObjectClass& catalogue_class(Family f, std::uint32_t class_id);

/// Symmetric Hausdorff distance between the classes' vertex sets (polygon
/// vertices, or blob (cx, cy, sx, sy) tuples).
double geometry_distance(const ObjectClass& a, const ObjectClass& b);
inline constexpr double kMinGeometryDistance = 0.05;

struct BackgroundParams {
  /// Lattice cells per side for the coarsest octave.
  std::uint32_t cells = 6;
  std::uint32_t octaves = 2;
  double level_min = 0.25, level_max = 0.45;
  /// Peak-to-peak background contrast is drawn from [contrast_min, contrast_max].
  double contrast_min = 0.1, contrast_max = 0.3;
};

struct SceneParams {
  /// Object units to pixels: scale = object_scale * resolution / 2.
  double object_scale = 0.6;
  /// Per-image multiplicative albedo jitter, U(1 - j, 1 + j).
  double albedo_jitter = 0.1;
  std::uint32_t supersample = 4;
  /// Std-dev of additive white pixel noise, applied before the final clamp.
  double sensor_noise = 0.0;
  BackgroundParams background;

  void validate() const;
};

inline constexpr std::uint32_t kResolutions[] = {256, 128, 64, 32};

/// Object coverage in [0, 1] (polygon area fraction or clamped blob sum).
Image2D render_coverage(const ObjectClass& cls, std::uint32_t resolution, double rotation_deg,
                        const SceneParams& params = {});

/// Rotated object composited over seeded value noise; values in [0, 1].
Image2D render_scene(const ObjectClass& cls, std::uint32_t resolution, double rotation_deg,
                     std::uint64_t background_seed, const SceneParams& params = {});

struct ClassSpec {
  std::uint32_t class_id = 0;
  bool is_true = false;
  std::size_t count_per_resolution = 0;
};

struct ImageEntry {
  std::string path;  // relative to the corpus root
  std::uint32_t class_id = 0;
  bool is_true = false;
  std::uint32_t resolution = 0;
  std::uint32_t index = 0;
  double rotation_deg = 0.0;
  std::uint64_t background_seed = 0;
  std::string sha256;
};

struct DatasetManifest {
  Family family = Family::kVehicleShapes;
  std::uint64_t seed = 1;
  std::vector<std::uint32_t> resolutions = {256, 128, 64, 32};
  double rotation_min = 0.0, rotation_max = 360.0;
  SceneParams scene;
  std::string crop_mode = "center";
  std::vector<ClassSpec> classes;
  /// Filled in by generate_corpus.
  std::vector<ImageEntry> images;
  std::vector<std::string> filters;

  void validate() const;
  std::size_t expected_count() const;
  nlohmann::ordered_json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

/// 720 true + 3 x 360 false images spread uniformly over the four resolutions.
DatasetManifest default_manifest(Family f, std::uint64_t seed);

/// Stratified rotation of sample `index` out of `count`, seed-independent.
double rotation_for(const DatasetManifest& m, std::size_t index, std::size_t count);

/// Planned entries (no hashes) in generation order.
std::vector<ImageEntry> plan_images(const DatasetManifest& m);

/// Renders every image under root as <family>/<class>/<res>/<index>.pgm and
/// writes <family>/manifest.json. A pure function of the manifest.
DatasetManifest generate_corpus(const DatasetManifest& m, const std::filesystem::path& root, unsigned threads = 1);

/// Checks that every listed file exists and hash-matches.
void verify_corpus(const DatasetManifest& m, const std::filesystem::path& root);

DatasetManifest read_manifest(const std::filesystem::path& path);
std::filesystem::path manifest_path(const std::filesystem::path& root, Family f);

}  // namespace corrpost::synth
