#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "corrpost/synthdata/synthdata.hpp"

namespace corrpost::synth {

namespace {

struct Box {
  double x0, x1, y0, y1;
};

Box bounds(const std::vector<Point>& v) {
  Box b{v[0].x, v[0].x, v[0].y, v[0].y};
  for (const auto& p : v) {
    b.x0 = std::min(b.x0, p.x), b.x1 = std::max(b.x1, p.x);
    b.y0 = std::min(b.y0, p.y), b.y1 = std::max(b.y1, p.y);
  }
  return b;
}

bool inside(const std::vector<Point>& v, const Box& b, double x, double y) {
  if (x < b.x0 || x > b.x1 || y < b.y0 || y > b.y1) return false;
  bool in = false;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    if ((v[i].y > y) != (v[j].y > y) && x < (v[j].x - v[i].x) * (y - v[i].y) / (v[j].y - v[i].y) + v[i].x) in = !in;
  }
  return in;
}

void check_resolution(std::uint32_t resolution) {
  if (std::find(std::begin(kResolutions), std::end(kResolutions), resolution) == std::end(kResolutions)) {
    throw DimensionError("resolution must be one of 32, 64, 128, 256 (got " + std::to_string(resolution) + ")");
  }
}

/// Object sample at one point: coverage in [0,1] and the gray level under it.
struct Sample {
  double coverage;
  double value;
};

class Rasterizer {
 public:
  Rasterizer(const ObjectClass& cls, std::uint32_t resolution, double rotation_deg, const SceneParams& params,
             double albedo)
      : cls_(cls), res_(resolution), ss_(params.supersample), albedo_(albedo) {
    if (!std::isfinite(rotation_deg)) throw GeometryError("rotation must be finite");
    cls.validate();
    check_resolution(resolution);
    double deg = std::fmod(rotation_deg, 360.0);
    if (deg < 0.0) deg += 360.0;
    const double theta = deg * std::numbers::pi / 180.0;
    cos_ = std::cos(theta);
    sin_ = std::sin(theta);
    inv_scale_ = 2.0 / (params.object_scale * resolution);
    for (const auto& s : cls.shapes) boxes_.push_back(bounds(s.vertices));
  }

  /// Supersampled object coverage and coverage-weighted gray level at a pixel.
  Sample pixel(std::size_t row, std::size_t col) const {
    double cov = 0.0, val = 0.0;
    const double half = res_ / 2.0;
    for (std::uint32_t sy = 0; sy < ss_; ++sy) {
      for (std::uint32_t sx = 0; sx < ss_; ++sx) {
        const double dx = col + (sx + 0.5) / ss_ - half;
        const double dy = row + (sy + 0.5) / ss_ - half;
        const double u = (dx * cos_ - dy * sin_) * inv_scale_;
        const double v = (dx * sin_ + dy * cos_) * inv_scale_;
        const Sample s = at(u, v);
        cov += s.coverage;
        val += s.coverage * s.value;
      }
    }
    const double n = static_cast<double>(ss_) * ss_;
    return {cov / n, val / n};
  }

 private:
  Sample at(double u, double v) const {
    if (!cls_.shapes.empty()) {
      for (std::size_t k = cls_.shapes.size(); k-- > 0;) {
        if (inside(cls_.shapes[k].vertices, boxes_[k], u, v)) {
          return {1.0, std::clamp(albedo_ + cls_.shapes[k].shade, 0.0, 1.0)};
        }
      }
      return {0.0, 0.0};
    }
    double pos = 0.0, neg = 0.0;
    for (const auto& b : cls_.blobs) {
      const double qx = (u - b.cx) / b.sx, qy = (v - b.cy) / b.sy;
      const double g = b.amplitude * std::exp(-0.5 * (qx * qx + qy * qy));
      (b.amplitude > 0.0 ? pos : neg) += g;
    }
    return {std::min(1.0, pos), std::clamp(albedo_ + neg, 0.0, 1.0)};
  }

  const ObjectClass& cls_;
  std::uint32_t res_, ss_;
  double albedo_, cos_, sin_, inv_scale_;
  std::vector<Box> boxes_;
};

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

/// Multi-octave value noise in [0, 1].
Image2D value_noise(std::uint32_t resolution, const BackgroundParams& bg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Image2D out(resolution, resolution);
  double amp = 1.0, total = 0.0;
  for (std::uint32_t o = 0; o < bg.octaves; ++o) {
    const std::size_t cells = static_cast<std::size_t>(bg.cells) << o;
    const std::size_t side = cells + 1;
    std::vector<double> lattice(side * side);
    for (auto& v : lattice) v = unit(rng);
    for (std::size_t r = 0; r < resolution; ++r) {
      const double ty = (r + 0.5) / resolution * cells;
      const std::size_t iy = std::min(static_cast<std::size_t>(ty), cells - 1);
      const double fy = smoothstep(ty - iy);
      for (std::size_t c = 0; c < resolution; ++c) {
        const double tx = (c + 0.5) / resolution * cells;
        const std::size_t ix = std::min(static_cast<std::size_t>(tx), cells - 1);
        const double fx = smoothstep(tx - ix);
        const double top = lattice[iy * side + ix] * (1 - fx) + lattice[iy * side + ix + 1] * fx;
        const double bot = lattice[(iy + 1) * side + ix] * (1 - fx) + lattice[(iy + 1) * side + ix + 1] * fx;
        out(r, c) += amp * (top * (1 - fy) + bot * fy);
      }
    }
    total += amp;
    amp *= 0.5;
  }
  for (auto& v : out.data()) v /= total;
  return out;
}

}  // namespace

void SceneParams::validate() const {
  if (!(object_scale > 0.0 && object_scale <= 1.0)) throw ParameterError("scene: object_scale must lie in (0, 1]");
  if (!(albedo_jitter >= 0.0 && albedo_jitter < 1.0)) throw ParameterError("scene: albedo_jitter must lie in [0, 1)");
  if (supersample < 1 || supersample > 16) throw ParameterError("scene: supersample must lie in [1, 16]");
  if (!(sensor_noise >= 0.0 && sensor_noise <= 0.25)) throw ParameterError("scene: sensor_noise must lie in [0, 0.25]");
  const auto& b = background;
  if (b.cells < 1 || b.octaves < 1 || b.octaves > 6) throw ParameterError("scene: invalid background lattice");
  if (!(b.level_min >= 0.0 && b.level_min <= b.level_max && b.level_max <= 1.0)) {
    throw ParameterError("scene: background level range must lie in [0, 1]");
  }
  if (!(b.contrast_min >= 0.0 && b.contrast_min <= b.contrast_max && b.contrast_max <= 0.3)) {
    throw ParameterError("scene: background contrast range must lie in [0, 0.3]");
  }
}

Image2D render_coverage(const ObjectClass& cls, std::uint32_t resolution, double rotation_deg,
                        const SceneParams& params) {
  params.validate();
  const Rasterizer raster(cls, resolution, rotation_deg, params, cls.albedo);
  Image2D out(resolution, resolution);
  for (std::size_t r = 0; r < resolution; ++r)
    for (std::size_t c = 0; c < resolution; ++c) out(r, c) = raster.pixel(r, c).coverage;
  return out;
}

Image2D render_scene(const ObjectClass& cls, std::uint32_t resolution, double rotation_deg,
                     std::uint64_t background_seed, const SceneParams& params) {
  params.validate();
  std::mt19937_64 rng(background_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& bg = params.background;
  const double level = bg.level_min + (bg.level_max - bg.level_min) * unit(rng);
  const double contrast = bg.contrast_min + (bg.contrast_max - bg.contrast_min) * unit(rng);
  const double albedo = cls.albedo * (1.0 + params.albedo_jitter * (2.0 * unit(rng) - 1.0));

  const Rasterizer raster(cls, resolution, rotation_deg, params, albedo);
  Image2D out = value_noise(resolution, bg, rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t r = 0; r < resolution; ++r) {
    for (std::size_t c = 0; c < resolution; ++c) {
      const double back = level + contrast * (out(r, c) - 0.5);
      const Sample s = raster.pixel(r, c);
      const double n = params.sensor_noise > 0.0 ? params.sensor_noise * noise(rng) : 0.0;
      out(r, c) = std::clamp(back * (1.0 - s.coverage) + s.value + n, 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace corrpost::synth
