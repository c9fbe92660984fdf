#pragma once

// Test-only reference implementations. Each one takes an independent route
// from the library code (dense matrices, closed forms, direct summation) so
// expected values are frozen against a second derivation, not the code under
// test.

#include <functional>
#include <random>

#include "gsurf/camera.hpp"
#include "gsurf/render.hpp"
#include "gsurf/surfel.hpp"

namespace oracles {

using namespace gsurf;

// --- raw parameter enumeration (position, quat, log-scale, logit, sh) ---

inline constexpr std::size_t kParamsPerSurfel = 3 + 4 + 2 + 1 + kShCoeffCount;

inline std::size_t param_count(const SurfelSet& s) {
  return s.count() * kParamsPerSurfel;
}

inline double* param_ptr(SurfelSet& s, std::size_t idx) {
  const std::size_t i = idx / kParamsPerSurfel;
  std::size_t r = idx % kParamsPerSurfel;
  if (r < 3) return &s.position[i][r];
  r -= 3;
  if (r < 4) return &s.rotation[i][r];
  r -= 4;
  if (r < 2) return &s.log_scale[i][r];
  r -= 2;
  if (r < 1) return &s.opacity_logit[i];
  r -= 1;
  return &s.sh[i][r];
}

inline double grad_component(const GradientBuffer& g, std::size_t idx) {
  const std::size_t i = idx / kParamsPerSurfel;
  std::size_t r = idx % kParamsPerSurfel;
  if (r < 3) return g.d_position[i][r];
  r -= 3;
  if (r < 4) return g.d_rotation[i][r];
  r -= 4;
  if (r < 2) return g.d_log_scale[i][r];
  r -= 2;
  if (r < 1) return g.d_opacity_logit[i];
  r -= 1;
  return g.d_sh[i][r];
}

// Central difference of an arbitrary scalar function of the raw parameters.
inline double central_diff(const SurfelSet& s, std::size_t idx,
                           const std::function<double(const SurfelSet&)>& f,
                           double h = 1e-5) {
  SurfelSet sp = s;
  *param_ptr(sp, idx) += h;
  const double fp = f(sp);
  SurfelSet sm = s;
  *param_ptr(sm, idx) -= h;
  const double fm = f(sm);
  return (fp - fm) / (2.0 * h);
}

// --- geometric references ---

// Depth (camera z) at which the ray through a pixel hits the plane through
// p0 with normal nrm (all camera space). The ray has unit z component, so
// depth equals the ray parameter.
inline double ray_plane_depth(const CameraView& cam, const Vec2& pixel,
                              const Vec3& p0, const Vec3& nrm) {
  const Vec3 dir = cam.pixel_ray(pixel.x(), pixel.y());
  return nrm.dot(p0) / nrm.dot(dir);
}

// Screen covariance through the dense 3x3 route: full world covariance,
// rotated into camera space, squeezed by the affine jacobian.
inline Mat2 cov2d_dense(const Activated& a, const Vec3& pos,
                        const CameraView& cam, double lowpass) {
  const Vec3 sq(a.scale[0] * a.scale[0], a.scale[1] * a.scale[1], 0.0);
  const Mat3 cov_world = a.rotation * sq.asDiagonal() * a.rotation.transpose();
  const Mat3 cov_cam = cam.rot * cov_world * cam.rot.transpose();
  const Mat23 j = affine_jacobian(cam, cam.world_to_cam(pos));
  return (j * cov_cam * j.transpose()) + Mat2::Identity() * lowpass;
}

// Two-term front-to-back blend, written out longhand.
struct BlendTerm {
  double alpha;
  Vec3 color;
  double depth;
};

inline Vec3 blend_two_color(const BlendTerm& a, const BlendTerm& b,
                            const Vec3& bg) {
  return a.alpha * a.color + (1 - a.alpha) * b.alpha * b.color +
         (1 - a.alpha) * (1 - b.alpha) * bg;
}

inline double blend_two_depth(const BlendTerm& a, const BlendTerm& b) {
  const double w1 = a.alpha, w2 = (1 - a.alpha) * b.alpha;
  return (w1 * a.depth + w2 * b.depth) / (w1 + w2);
}

// --- randomized scenes for gradient checks ---

struct TestScene {
  SurfelSet surfels;
  CameraView camera;
};

// Surfels in front of an identity-pose camera, footprints a few pixels wide,
// opacities kept away from the alpha_max clamp.
inline TestScene make_scene(std::uint64_t seed, std::size_t n, int width,
                            int height) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  TestScene t;
  t.camera.width = width;
  t.camera.height = height;
  t.camera.fx = t.camera.fy = width * 0.9;
  t.camera.cx = width * 0.5;
  t.camera.cy = height * 0.5;

  t.surfels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 2.5 + 1.5 * u01(rng);
    const double span = 0.4 * z * width / t.camera.fx;
    const Vec3 p(span * (2 * u01(rng) - 1), span * (2 * u01(rng) - 1), z);
    Vec4 q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    while (q.norm() < 1e-3) q = Vec4(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    const double ls = std::log(0.04 + 0.10 * u01(rng));
    const Vec2 log_scale(ls + 0.3 * u01(rng), ls + 0.3 * u01(rng));
    const double logit_op = -1.0 + 3.0 * u01(rng);  // opacity in (0.27, 0.88)
    ShCoeffs sh{};
    for (int c = 0; c < 3; ++c) sh[c] = 0.8 * (u01(rng) - 0.3);
    for (int b = 3; b < kShCoeffCount; ++b) sh[b] = 0.08 * (2 * u01(rng) - 1);
    t.surfels.push_back(p, q, log_scale, logit_op, sh);
  }
  return t;
}

}  // namespace oracles
