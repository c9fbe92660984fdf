#pragma once

#include "gsurf/math.hpp"
#include "gsurf/surfel.hpp"

namespace gsurf {

// Pinhole view. rot/trans map world to camera: x_cam = rot * x_world + trans.
// Camera looks down +z. Pixel (row i, col j) has center (j + 0.5, i + 0.5).
struct CameraView {
  int width = 0;
  int height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Mat3 rot = Mat3::Identity();
  Vec3 trans = Vec3::Zero();

  Vec3 world_to_cam(const Vec3& p) const { return rot * p + trans; }
  Vec3 cam_to_world(const Vec3& pc) const { return rot.transpose() * (pc - trans); }
  Vec3 center() const { return -(rot.transpose() * trans); }
  Vec2 project(const Vec3& pc) const {
    return {fx * pc.x() / pc.z() + cx, fy * pc.y() / pc.z() + cy};
  }
  // Unit-depth ray through a pixel coordinate, camera space.
  Vec3 pixel_ray(double px, double py) const {
    return {(px - cx) / fx, (py - cy) / fy, 1.0};
  }
  // Intrinsics for an integer downscale of the image grid.
  CameraView downscaled(int factor) const;
  bool same_geometry(const CameraView& o, double tol = 0.0) const;
};

// First-order expansion of the projection around a camera-space point.
Mat23 affine_jacobian(const CameraView& cam, const Vec3& pc);

struct ProjectionOptions {
  double lowpass = 0.3;      // pixels^2, added to cov2d diagonal
  double sigma = 3.0;        // screen-extent multiplier for visibility culling
  double cond_limit = 1e5;   // tangent->screen condition bound (edge-on cull)
  double near_clip = 1e-2;
};

struct ProjectedSurfel {
  Vec2 screen_center = Vec2::Zero();
  Mat2 cov2d = Mat2::Zero();      // includes the low-pass floor
  double center_depth = 0.0;
  Vec2 depth_slope = Vec2::Zero();  // d(depth)/d(pixel)
  Vec3 cam_normal = Vec3::Zero();
  double extent_radius = 0.0;       // sigma * sqrt(lambda_max(cov2d))
  bool culled = true;
};

// Intermediates kept so the rasterizer backward can reuse the exact forward
// values instead of recomputing them.
struct FullProjection {
  ProjectedSurfel s;
  Vec3 tc = Vec3::Zero();        // camera-space center
  Mat3 M = Mat3::Zero();         // cam.rot * surfel rotation
  Mat2 P = Mat2::Zero();         // screen response of the tangent axes
  Mat2 Pinv = Mat2::Zero();
  Mat2 cov_inv = Mat2::Zero();
  Vec2 ext = Vec2::Zero();       // per-axis sigma-box half extents, pixels
};

FullProjection project_surfel_full(const Activated& a, const Vec3& position,
                                   const CameraView& cam,
                                   const ProjectionOptions& opt);

ProjectedSurfel project_surfel(const Activated& a, const Vec3& position,
                               const CameraView& cam,
                               const ProjectionOptions& opt = {});

// First-order per-pixel depth of a projected surfel.
inline double pixel_depth(const ProjectedSurfel& p, const Vec2& pixel) {
  return p.center_depth + p.depth_slope.dot(pixel - p.screen_center);
}

}  // namespace gsurf
