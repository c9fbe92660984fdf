#include "gsurf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>
#include <stdexcept>

#include "gsurf/ply_io.hpp"

namespace gsurf {
namespace {

constexpr double kPi = 3.14159265358979323846;

// World-space geometry constants. The sphere keeps radius 1 so Chamfer
// numbers read directly as fractions of the radius.
constexpr double kPlaneHalf = 1.2;
constexpr double kSphereRadius = 1.0;
constexpr double kCubeHalf = 0.7;
constexpr double kOccluderHalf = 0.45;
constexpr double kOccluderZ = 0.8;

struct Hit {
  bool valid = false;
  double t = 0.0;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();  // outward, world space
};

bool square_hit(const Vec3& o, const Vec3& d, double z, double half, Hit& h) {
  if (std::abs(d.z()) < 1e-12) return false;
  const double t = (z - o.z()) / d.z();
  if (t <= 1e-9) return false;
  const Vec3 p = o + t * d;
  if (std::abs(p.x()) > half || std::abs(p.y()) > half) return false;
  h.valid = true;
  h.t = t;
  h.point = p;
  h.normal = Vec3(0, 0, o.z() > z ? 1.0 : -1.0);
  return true;
}

bool sphere_hit(const Vec3& o, const Vec3& d, Hit& h) {
  const double b = o.dot(d);
  const double c = o.squaredNorm() - kSphereRadius * kSphereRadius;
  const double disc = b * b - c;
  if (disc < 0) return false;
  const double s = std::sqrt(disc);
  double t = -b - s;
  if (t <= 1e-9) t = -b + s;
  if (t <= 1e-9) return false;
  h.valid = true;
  h.t = t;
  h.point = o + t * d;
  h.normal = h.point / kSphereRadius;
  return true;
}

bool cube_hit(const Vec3& o, const Vec3& d, Hit& h) {
  double t_in = -1e30, t_out = 1e30;
  int axis = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-12) {
      if (std::abs(o[a]) > kCubeHalf) return false;
      continue;
    }
    double lo = (-kCubeHalf - o[a]) / d[a];
    double hi = (kCubeHalf - o[a]) / d[a];
    if (lo > hi) std::swap(lo, hi);
    if (lo > t_in) {
      t_in = lo;
      axis = a;
    }
    t_out = std::min(t_out, hi);
  }
  if (axis < 0 || t_in > t_out || t_in <= 1e-9) return false;
  h.valid = true;
  h.t = t_in;
  h.point = o + t_in * d;
  h.normal = Vec3::Zero();
  h.normal[axis] = h.point[axis] > 0 ? 1.0 : -1.0;
  return true;
}

Hit trace(SceneKind kind, const Vec3& o, const Vec3& d) {
  Hit h;
  switch (kind) {
    case SceneKind::plane:
      square_hit(o, d, 0.0, kPlaneHalf, h);
      break;
    case SceneKind::sphere:
      sphere_hit(o, d, h);
      break;
    case SceneKind::cube:
      cube_hit(o, d, h);
      break;
    case SceneKind::two_planes: {
      Hit fg, bg;
      square_hit(o, d, kOccluderZ, kOccluderHalf, fg);
      square_hit(o, d, 0.0, kPlaneHalf, bg);
      if (fg.valid && (!bg.valid || fg.t < bg.t))
        h = fg;
      else if (bg.valid)
        h = bg;
      break;
    }
  }
  return h;
}

// Segment camera -> surface point blocked by other geometry? Only the
// occluder of two_planes can shadow anything; the other scenes are convex
// or flat.
bool segment_blocked(SceneKind kind, const Vec3& cam, const Vec3& p) {
  if (kind != SceneKind::two_planes) return false;
  if (std::abs(p.z() - kOccluderZ) < 1e-9) return false;  // point on the occluder
  const double dz = p.z() - cam.z();
  if (std::abs(dz) < 1e-12) return false;
  const double s = (kOccluderZ - cam.z()) / dz;
  if (s <= 1e-9 || s >= 1.0 - 1e-9) return false;
  const Vec3 q = cam + s * (p - cam);
  return std::abs(q.x()) <= kOccluderHalf && std::abs(q.y()) <= kOccluderHalf;
}

Vec3 shade(const Vec3& p, const Vec3& n) {
  static const Vec3 light = Vec3(0.3, -0.25, 0.9).normalized();
  // Two octaves per channel: the fine octave gives multi-view photometric
  // alignment sub-pixel leverage that a smooth gradient alone cannot.
  const Vec3 albedo(0.55 + 0.22 * std::sin(3.0 * p.x() + 1.3) +
                        0.13 * std::sin(12.0 * p.y() + 0.4),
                    0.55 + 0.22 * std::sin(2.4 * p.y() + 0.7) +
                        0.13 * std::sin(13.0 * (p.x() - p.z()) + 1.9),
                    0.55 + 0.22 * std::sin(2.8 * (p.x() + p.y()) + 2.0) +
                        0.13 * std::sin(11.0 * (p.y() + p.z()) + 3.1));
  const double s = 0.25 + 0.75 * std::max(0.0, n.dot(light));
  return albedo * s;
}

CameraView look_at(const Vec3& center, int width, int height) {
  CameraView cam;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = 1.25 * width;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;

  const Vec3 f = (-center).normalized();  // toward the origin
  Vec3 up(0, 0, 1);
  if (std::abs(f.dot(up)) > 0.95) up = Vec3(0, 1, 0);
  const Vec3 x = f.cross(up).normalized();
  const Vec3 y = f.cross(x);
  cam.rot.row(0) = x;
  cam.rot.row(1) = y;
  cam.rot.row(2) = f;
  cam.trans = -(cam.rot * center);
  return cam;
}

bool one_sided(SceneKind kind) {
  return kind == SceneKind::plane || kind == SceneKind::two_planes;
}

Aabb scene_bbox(SceneKind kind) {
  Aabb box;
  switch (kind) {
    case SceneKind::plane:
      box.min = Vec3(-kPlaneHalf, -kPlaneHalf, 0);
      box.max = Vec3(kPlaneHalf, kPlaneHalf, 0);
      break;
    case SceneKind::sphere:
      box.min = -Vec3::Ones() * kSphereRadius;
      box.max = Vec3::Ones() * kSphereRadius;
      break;
    case SceneKind::cube:
      box.min = -Vec3::Ones() * kCubeHalf;
      box.max = Vec3::Ones() * kCubeHalf;
      break;
    case SceneKind::two_planes:
      box.min = Vec3(-kPlaneHalf, -kPlaneHalf, 0);
      box.max = Vec3(kPlaneHalf, kPlaneHalf, kOccluderZ);
      break;
  }
  const double pad = std::max(0.15 * box.diagonal(), 0.1);
  box.min -= Vec3::Ones() * pad;
  box.max += Vec3::Ones() * pad;
  return box;
}

// One surface sample with its outward normal, uniform in area.
struct Sampler {
  SceneKind kind;
  std::mt19937_64& rng;
  std::uniform_real_distribution<double> uni{0.0, 1.0};
  std::normal_distribution<double> gauss{0.0, 1.0};

  void sample(Vec3& p, Vec3& n) {
    switch (kind) {
      case SceneKind::plane:
        p = Vec3(kPlaneHalf * (2 * uni(rng) - 1), kPlaneHalf * (2 * uni(rng) - 1), 0);
        n = Vec3(0, 0, 1);
        return;
      case SceneKind::sphere: {
        Vec3 d;
        do {
          d = Vec3(gauss(rng), gauss(rng), gauss(rng));
        } while (d.norm() < 1e-9);
        n = d.normalized();
        p = kSphereRadius * n;
        return;
      }
      case SceneKind::cube: {
        const int face = static_cast<int>(uni(rng) * 6.0) % 6;
        const int axis = face / 2;
        const double sign = face % 2 ? -1.0 : 1.0;
        p[axis] = sign * kCubeHalf;
        p[(axis + 1) % 3] = kCubeHalf * (2 * uni(rng) - 1);
        p[(axis + 2) % 3] = kCubeHalf * (2 * uni(rng) - 1);
        n = Vec3::Zero();
        n[axis] = sign;
        return;
      }
      case SceneKind::two_planes: {
        const double bg_area = 4 * kPlaneHalf * kPlaneHalf;
        const double fg_area = 4 * kOccluderHalf * kOccluderHalf;
        if (uni(rng) * (bg_area + fg_area) < fg_area) {
          p = Vec3(kOccluderHalf * (2 * uni(rng) - 1), kOccluderHalf * (2 * uni(rng) - 1),
                   kOccluderZ);
        } else {
          p = Vec3(kPlaneHalf * (2 * uni(rng) - 1), kPlaneHalf * (2 * uni(rng) - 1), 0);
        }
        n = Vec3(0, 0, 1);
        return;
      }
    }
  }
};

}  // namespace

SceneKind scene_kind_from_name(const std::string& name) {
  if (name == "plane") return SceneKind::plane;
  if (name == "sphere") return SceneKind::sphere;
  if (name == "cube") return SceneKind::cube;
  if (name == "two_planes") return SceneKind::two_planes;
  throw std::invalid_argument("unknown scene kind: " + name);
}

SyntheticScene synthesize(const SyntheticSpec& spec) {
  if (spec.views < 1 || spec.width < 8 || spec.height < 8)
    throw std::invalid_argument("synthesize: degenerate spec");

  SyntheticScene out;
  out.dataset.bbox = scene_bbox(spec.kind);
  out.dataset.background = Vec3::Zero();
  out.dataset.scale_hint = out.dataset.bbox.diagonal();

  for (int i = 0; i < spec.views; ++i) {
    double elev = spec.elevation_deg;
    if (one_sided(spec.kind)) {
      if (i % 2) elev = std::min(elev + 20.0, 80.0);
    } else {
      if (i % 2) elev = -elev;
    }
    const double polar = (90.0 - elev) * kPi / 180.0;
    const double azim = 2.0 * kPi * i / spec.views;
    const Vec3 center = spec.camera_radius *
                        Vec3(std::sin(polar) * std::cos(azim),
                             std::sin(polar) * std::sin(azim), std::cos(polar));

    ViewData view;
    view.camera = look_at(center, spec.width, spec.height);
    {
      std::ostringstream os;
      os << "view_";
      os.fill('0');
      os.width(3);
      os << i;
      view.name = os.str();
    }
    view.image = Image(spec.height, spec.width, 3);
    view.mask = Bitmap(spec.height, spec.width, false);
    view.has_mask = true;
    view.prior_normal = Image(spec.height, spec.width, 3);
    view.has_prior = true;
    Image depth(spec.height, spec.width, 1);

    const Mat3 rot_t = view.camera.rot.transpose();
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        const Vec3 dir_w = (rot_t * view.camera.pixel_ray(x + 0.5, y + 0.5)).normalized();
        const Hit h = trace(spec.kind, center, dir_w);
        if (!h.valid) continue;
        const Vec3 c = shade(h.point, h.normal);
        for (int ch = 0; ch < 3; ++ch)
          view.image.at(y, x, ch) = std::clamp(c[ch], 0.0, 1.0);
        view.mask.at(y, x) = 1;
        depth.at(y, x) = view.camera.world_to_cam(h.point).z();
        const Vec3 n_cam = view.camera.rot * h.normal;
        for (int ch = 0; ch < 3; ++ch) view.prior_normal.at(y, x, ch) = n_cam[ch];
      }

    out.depth.push_back(std::move(depth));
    out.dataset.views.push_back(std::move(view));
  }

  // Surface samples kept only when some camera sees them front-facing,
  // in-frame and unoccluded, so coverage gaps do not poison Chamfer.
  std::mt19937_64 rng(hash_seed(spec.seed, 0x53594e5448ull));
  Sampler sampler{spec.kind, rng};
  std::vector<Vec3> centers;
  for (const ViewData& v : out.dataset.views) centers.push_back(v.camera.center());
  out.gt_points.positions.reserve(spec.gt_samples);
  out.gt_points.normals.reserve(spec.gt_samples);
  std::size_t attempts = 0;
  const std::size_t max_attempts = 200 * std::max<std::size_t>(spec.gt_samples, 1);
  while (out.gt_points.positions.size() < spec.gt_samples && attempts++ < max_attempts) {
    Vec3 p, n;
    sampler.sample(p, n);
    bool visible = false;
    for (std::size_t vi = 0; vi < centers.size() && !visible; ++vi) {
      if (n.dot(centers[vi] - p) <= 1e-9) continue;
      const Vec3 pc = out.dataset.views[vi].camera.world_to_cam(p);
      if (pc.z() <= 1e-6) continue;
      const Vec2 px = out.dataset.views[vi].camera.project(pc);
      if (px.x() < 0 || px.x() > out.dataset.views[vi].camera.width || px.y() < 0 ||
          px.y() > out.dataset.views[vi].camera.height)
        continue;
      if (segment_blocked(spec.kind, centers[vi], p)) continue;
      visible = true;
    }
    if (!visible) continue;
    out.gt_points.positions.push_back(p);
    out.gt_points.normals.push_back(n);
  }
  return out;
}

void write_scene_with_gt(const std::string& dir, const SyntheticScene& scene) {
  save_scene(dir, scene.dataset);
  write_ply((std::filesystem::path(dir) / "gt_points.ply").string(), scene.gt_points);
}

}  // namespace gsurf
