#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "corrpost/synthdata/synthdata.hpp"

namespace corrpost::synth {

std::string_view to_string(Family f) { return f == Family::kVehicleShapes ? "vehicle_shapes" : "face_blobs"; }

Family family_from_string(std::string_view s) {
  if (s == "vehicle_shapes" || s == "VEHICLE_SHAPES") return Family::kVehicleShapes;
  if (s == "face_blobs" || s == "FACE_BLOBS") return Family::kFaceBlobs;
  throw ConfigError("unknown family '" + std::string(s) + "'");
}

namespace {

double polygon_area(const std::vector<Point>& v) {
  double a = 0.0;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) a += v[j].x * v[i].y - v[i].x * v[j].y;
  return 0.5 * std::abs(a);
}

Shape rect(double x0, double x1, double y0, double y1, double shade = 0.0) {
  return {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, shade};
}

// Hull with the front (positive x) corners cut by `chamfer`.
Shape hull(double x0, double x1, double half_width, double chamfer) {
  return {{{x0, -half_width},
           {x1 - chamfer, -half_width},
           {x1, -half_width + chamfer},
           {x1, half_width - chamfer},
           {x1 - chamfer, half_width},
           {x0, half_width}},
          0.0};
}

Shape regular(double cx, double cy, double radius, int sides, double shade) {
  Shape s{{}, shade};
  for (int k = 0; k < sides; ++k) {
    const double a = 2.0 * std::numbers::pi * (k + 0.5) / sides;
    s.vertices.push_back({cx + radius * std::cos(a), cy + radius * std::sin(a)});
  }
  return s;
}

Shape outline(std::vector<Point> pts, double shade) { return {std::move(pts), shade}; }

ObjectClass vehicle(std::uint32_t id, std::string name, double albedo, std::vector<Shape> shapes) {
  ObjectClass c;
  c.family = Family::kVehicleShapes;
  c.class_id = id;
  c.name = std::move(name);
  c.albedo = albedo;
  c.shapes = std::move(shapes);
  return c;
}

ObjectClass face(std::uint32_t id, std::string name, double albedo, std::vector<Blob> blobs) {
  ObjectClass c;
  c.family = Family::kFaceBlobs;
  c.class_id = id;
  c.name = std::move(name);
  c.albedo = albedo;
  c.blobs = std::move(blobs);
  return c;
}

// Albedos equalize zero-mean object energy within a family, so a raw peak
// height carries no brightness cue between classes.

std::vector<ObjectClass> vehicles() {
  // Top-down silhouettes facing +x: hull, dark track strips, brighter turret, barrel.
  return {
      vehicle(0, "t72", 0.72,
              {hull(-1.0, 0.95, 0.52, 0.15), rect(-1.0, 0.8, -0.52, -0.4, -0.14), rect(-1.0, 0.8, 0.4, 0.52, -0.14),
               regular(-0.05, 0.0, 0.38, 10, 0.12), rect(0.25, 1.25, -0.045, 0.045, 0.12)}),
      vehicle(1, "abrams", 0.705,
              {hull(-0.97, 0.97, 0.52, 0.08), rect(-0.97, 0.87, -0.52, -0.41, -0.14), rect(-0.97, 0.87, 0.41, 0.52, -0.14),
               outline({{-0.6, -0.4}, {0.15, -0.42}, {0.45, -0.22}, {0.45, 0.22}, {0.15, 0.42}, {-0.6, 0.4}}, 0.1),
               rect(0.45, 1.2, -0.045, 0.045, 0.1)}),
      vehicle(2, "leopard", 0.712,
              {hull(-1.02, 0.98, 0.5, 0.1), rect(-1.02, 0.85, -0.5, -0.39, -0.14), rect(-1.02, 0.85, 0.39, 0.5, -0.14),
               outline({{-0.5, -0.36}, {0.05, -0.38}, {0.4, -0.15}, {0.4, 0.15}, {0.05, 0.38}, {-0.5, 0.36}}, 0.12),
               rect(0.4, 1.28, -0.04, 0.04, 0.12)}),
      vehicle(3, "chieftain", 0.711,
              {hull(-1.05, 0.95, 0.5, 0.2), rect(-1.05, 0.75, -0.5, -0.41, -0.14), rect(-1.05, 0.75, 0.41, 0.5, -0.14),
               outline({{-0.65, -0.3}, {-0.1, -0.36}, {0.3, -0.25}, {0.38, 0.0}, {0.3, 0.25}, {-0.1, 0.36}, {-0.65, 0.3}},
                       0.11),
               rect(0.35, 1.3, -0.045, 0.045, 0.11)}),
  };
}

std::vector<ObjectClass> faces() {
  // Head outline from saturating positive blobs (ears, hair, chin and jaw make
  // the silhouettes differ), then eyes, nose shadow, mouth and hair/beard as
  // negative shading.
  return {
      face(0, "face_a", 0.75,
           {{0, 0, 0.55, 0.8, 3.0}, {-1.0, -0.05, 0.1, 0.2, 3.0}, {1.0, -0.05, 0.1, 0.2, 3.0},
            {-0.22, -0.2, 0.09, 0.06, -0.45}, {0.22, -0.2, 0.09, 0.06, -0.45}, {0, 0.05, 0.05, 0.14, -0.2},
            {0, 0.38, 0.2, 0.05, -0.4}}),
      face(1, "face_b", 0.810,
           {{0, 0, 0.72, 0.62, 3.0}, {0, 0.75, 0.62, 0.3, 3.0}, {-0.32, -0.15, 0.1, 0.06, -0.45},
            {0.32, -0.15, 0.1, 0.06, -0.45}, {0, 0.08, 0.06, 0.12, -0.2}, {0, 0.55, 0.45, 0.2, -0.35}}),
      face(2, "face_c", 0.759,
           {{0, 0.05, 0.45, 0.8, 3.0}, {0, -1.35, 0.35, 0.25, 3.0}, {-0.18, -0.25, 0.08, 0.06, -0.45},
            {0.18, -0.25, 0.08, 0.06, -0.45}, {0, 0.02, 0.05, 0.15, -0.2}, {0, 0.45, 0.16, 0.05, -0.4},
            {0, -1.3, 0.4, 0.3, -0.3}}),
      face(3, "face_d", 0.726,
           {{0, -0.15, 0.62, 0.6, 3.0}, {0, 0.85, 0.2, 0.3, 3.0}, {-0.7, -0.8, 0.25, 0.2, 3.0},
            {0.7, -0.8, 0.25, 0.2, 3.0}, {-0.25, -0.2, 0.09, 0.05, -0.45}, {0.25, -0.2, 0.09, 0.05, -0.45},
            {0, 0.1, 0.05, 0.13, -0.2}, {0, 0.5, 0.14, 0.05, -0.4}}),
  };
}

std::vector<std::array<double, 4>> vertex_set(const ObjectClass& c) {
  std::vector<std::array<double, 4>> pts;
  for (const auto& s : c.shapes)
    for (const auto& p : s.vertices) pts.push_back({p.x, p.y, 0.0, 0.0});
  for (const auto& b : c.blobs) pts.push_back({b.cx, b.cy, b.sx, b.sy});
  return pts;
}

double directed_hausdorff(const std::vector<std::array<double, 4>>& a, const std::vector<std::array<double, 4>>& b) {
  double worst = 0.0;
  for (const auto& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) {
      double d = 0.0;
      for (int k = 0; k < 4; ++k) d += (p[k] - q[k]) * (p[k] - q[k]);
      best = std::min(best, d);
    }
    worst = std::max(worst, std::sqrt(best));
  }
  return worst;
}

}  // namespace

void ObjectClass::validate() const {
  if (shapes.empty() && blobs.empty()) throw GeometryError(name + ": object has no geometry");
  for (const auto& s : shapes) {
    if (s.vertices.size() < 3 || polygon_area(s.vertices) < 1e-9) throw GeometryError(name + ": zero-area polygon");
  }
  bool silhouette = !shapes.empty();
  for (const auto& b : blobs) {
    if (!(b.sx > 0.0) || !(b.sy > 0.0)) throw GeometryError(name + ": blob widths must be positive");
    silhouette |= b.amplitude > 0.0;
  }
  if (!silhouette) throw GeometryError(name + ": blob mixture has no positive (silhouette) component");
}

std::vector<ObjectClass> catalogue(Family f) { return f == Family::kVehicleShapes ? vehicles() : faces(); }

const ObjectClass& catalogue_class(Family f, std::uint32_t class_id) {
  static const std::vector<ObjectClass> v = vehicles();
  static const std::vector<ObjectClass> fc = faces();
  const auto& list = f == Family::kVehicleShapes ? v : fc;
  for (const auto& c : list) {
    if (c.class_id == class_id) return c;
  }
  throw ConfigError("no class " + std::to_string(class_id) + " in family " + std::string(to_string(f)));
}

double geometry_distance(const ObjectClass& a, const ObjectClass& b) {
  if (a.family != b.family) return std::numeric_limits<double>::infinity();
  const auto pa = vertex_set(a), pb = vertex_set(b);
  return std::max(directed_hausdorff(pa, pb), directed_hausdorff(pb, pa));
}

}  // namespace corrpost::synth
