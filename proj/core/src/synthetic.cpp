#include "cvheat/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cvheat::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct ContourPoint {
  double x, y;    // pixels
  double nx, ny;  // outward unit normal
};

// Boundary point at parameter u in [0,1) for the object centered at (cx,cy).
ContourPoint contour_point(const SceneObject& o, double cx, double cy, double u) {
  switch (o.shape) {
    case ObjectShape::Square: {
      const double a = o.size;
      const double t = u * 4.0;
      const int edge = std::min(3, static_cast<int>(t));
      const double f = t - edge;
      switch (edge) {
        case 0: return {cx - a + 2 * a * f, cy - a, 0.0, -1.0};  // top
        case 1: return {cx + a, cy - a + 2 * a * f, 1.0, 0.0};   // right
        case 2: return {cx + a - 2 * a * f, cy + a, 0.0, 1.0};   // bottom
        default: return {cx - a, cy + a - 2 * a * f, -1.0, 0.0}; // left
      }
    }
    case ObjectShape::Disc: {
      const double th = 2.0 * kPi * u;
      return {cx + o.size * std::cos(th), cy + o.size * std::sin(th), std::cos(th), std::sin(th)};
    }
    case ObjectShape::Triangle: {
      // equilateral, vertex up, circumradius = size
      double vx[3], vy[3];
      for (int i = 0; i < 3; ++i) {
        const double ang = -kPi / 2.0 + i * 2.0 * kPi / 3.0;
        vx[i] = cx + o.size * std::cos(ang);
        vy[i] = cy + o.size * std::sin(ang);
      }
      const double t = u * 3.0;
      const int edge = std::min(2, static_cast<int>(t));
      const double f = t - edge;
      const int a = edge, b = (edge + 1) % 3;
      const double px = vx[a] + (vx[b] - vx[a]) * f;
      const double py = vy[a] + (vy[b] - vy[a]) * f;
      // outward normal of edge a->b (vertices wind clockwise in image coords)
      double ex = vx[b] - vx[a], ey = vy[b] - vy[a];
      const double len = std::sqrt(ex * ex + ey * ey);
      return {px, py, ey / len, -ex / len};
    }
  }
  return {cx, cy, 1.0, 0.0};
}

det::Box object_box(const SceneObject& o, double cx, double cy, int width, int height) {
  double x1, y1, x2, y2;
  if (o.shape == ObjectShape::Triangle) {
    x1 = 1e30, y1 = 1e30, x2 = -1e30, y2 = -1e30;
    for (int i = 0; i < 3; ++i) {
      const double ang = -kPi / 2.0 + i * 2.0 * kPi / 3.0;
      x1 = std::min(x1, cx + o.size * std::cos(ang));
      x2 = std::max(x2, cx + o.size * std::cos(ang));
      y1 = std::min(y1, cy + o.size * std::sin(ang));
      y2 = std::max(y2, cy + o.size * std::sin(ang));
    }
  } else {
    x1 = cx - o.size;
    y1 = cy - o.size;
    x2 = cx + o.size;
    y2 = cy + o.size;
  }
  auto clip = [](double v) { return std::min(1.0, std::max(0.0, v)); };
  return det::Box::from_corners(clip(x1 / width), clip(y1 / height), clip(x2 / width),
                                clip(y2 / height));
}

}  // namespace

SyntheticResult generate_synthetic(const SyntheticScene& scene, std::int64_t duration_us,
                                   std::int64_t slice_interval_us, std::uint64_t seed) {
  if (duration_us <= 0 || slice_interval_us <= 0)
    throw std::invalid_argument("generate_synthetic: duration and interval must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, scene.jitter);

  SyntheticResult out;
  const int n_slices = static_cast<int>((duration_us + slice_interval_us - 1) / slice_interval_us);
  out.gts.resize(n_slices);

  for (const SceneObject& o : scene.objects) {
    const double speed = std::sqrt(o.vx * o.vx + o.vy * o.vy);
    if (speed <= 0.0) continue;  // no brightness change, no events
    const double dt_s = duration_us * 1e-6;
    const std::int64_t attempts = std::llround(scene.contour_rate * o.contrast * dt_s);
    for (std::int64_t i = 0; i < attempts; ++i) {
      const double tu = uni(rng);  // time fraction within the stream
      const double u = uni(rng);   // contour parameter
      const double t_s = tu * dt_s;
      const double cx = o.cx + o.vx * t_s;
      const double cy = o.cy + o.vy * t_s;
      const ContourPoint p = contour_point(o, cx, cy, u);
      const double vn = (o.vx * p.nx + o.vy * p.ny) / speed;
      const double accept = uni(rng);
      if (accept >= std::fabs(vn)) continue;  // edge invisible to the sensor
      events::Event e;
      const double ex = p.x + jitter(rng);
      const double ey = p.y + jitter(rng);
      e.x = static_cast<int>(std::lround(ex));
      e.y = static_cast<int>(std::lround(ey));
      if (e.x < 0 || e.x >= scene.width || e.y < 0 || e.y >= scene.height) continue;
      e.t = static_cast<std::int64_t>(tu * duration_us);
      if (e.t >= duration_us) e.t = duration_us - 1;
      e.p = vn > 0.0 ? 1 : -1;  // leading edge brightens, trailing darkens
      out.stream.push_back(e);
    }
  }

  const std::int64_t noise_n = std::llround(scene.noise_rate * duration_us * 1e-6);
  for (std::int64_t i = 0; i < noise_n; ++i) {
    events::Event e;
    e.x = static_cast<int>(uni(rng) * scene.width);
    e.y = static_cast<int>(uni(rng) * scene.height);
    e.x = std::min(e.x, scene.width - 1);
    e.y = std::min(e.y, scene.height - 1);
    e.t = static_cast<std::int64_t>(uni(rng) * duration_us);
    if (e.t >= duration_us) e.t = duration_us - 1;
    e.p = uni(rng) < 0.5 ? -1 : 1;
    out.stream.push_back(e);
  }

  std::stable_sort(out.stream.begin(), out.stream.end(),
                   [](const events::Event& a, const events::Event& b) { return a.t < b.t; });

  for (int s = 0; s < n_slices; ++s) {
    const double mid_s = (s + 0.5) * slice_interval_us * 1e-6;
    for (const SceneObject& o : scene.objects) {
      det::GroundTruth gt;
      gt.class_id = static_cast<int>(o.shape);
      gt.box = object_box(o, o.cx + o.vx * mid_s, o.cy + o.vy * mid_s, scene.width, scene.height);
      if (gt.box.w <= 0.0 || gt.box.h <= 0.0) continue;  // fully clipped away
      out.gts[s].push_back(gt);
    }
  }
  return out;
}

SyntheticScene random_scene(int resolution, int min_objects, int max_objects,
                            std::int64_t duration_us, std::mt19937_64& rng) {
  if (min_objects < 0 || max_objects < min_objects)
    throw std::invalid_argument("random_scene: bad object count range");
  SyntheticScene scene;
  scene.width = resolution;
  scene.height = resolution;
  std::uniform_int_distribution<int> count_dist(min_objects, max_objects);
  std::uniform_int_distribution<int> shape_dist(0, 2);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int n = count_dist(rng);
  const double dt_s = duration_us * 1e-6;
  for (int i = 0; i < n; ++i) {
    SceneObject o;
    o.shape = static_cast<ObjectShape>(shape_dist(rng));
    // each object kind occupies its own contrast level and size band
    switch (o.shape) {
      case ObjectShape::Square:
        o.contrast = 1.0;
        o.size = resolution * (0.17 + 0.04 * uni(rng));
        break;
      case ObjectShape::Disc:
        o.contrast = 0.55;
        o.size = resolution * (0.125 + 0.04 * uni(rng));
        break;
      case ObjectShape::Triangle:
        o.contrast = 1.7;
        o.size = resolution * (0.215 + 0.04 * uni(rng));
        break;
    }
    // sample until start and end positions keep the object inside the frame
    for (int tries = 0; tries < 256; ++tries) {
      const double margin = o.size + 2.0;
      o.cx = margin + uni(rng) * (resolution - 2.0 * margin);
      o.cy = margin + uni(rng) * (resolution - 2.0 * margin);
      const double speed = resolution * (1.0 + 1.5 * uni(rng));  // px/s
      const double ang = 2.0 * kPi * uni(rng);
      o.vx = speed * std::cos(ang);
      o.vy = speed * std::sin(ang);
      const double fx = o.cx + o.vx * dt_s, fy = o.cy + o.vy * dt_s;
      if (fx > margin && fx < resolution - margin && fy > margin && fy < resolution - margin)
        break;
    }
    scene.objects.push_back(o);
  }
  return scene;
}

}  // namespace cvheat::synth
