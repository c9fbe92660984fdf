#pragma once

#include <cmath>

#include "gsurf/render.hpp"

namespace gsurf::detail {

// Compact per-surfel record for the per-pixel loops. Forward and backward
// both evaluate alpha through this struct with identical expressions, so the
// backward replay is bitwise equal to the forward traversal.
struct FlatSurfel {
  double ux, uy;
  double q00, q01, q11;  // inverse 2d covariance (symmetric)
  double opacity;
  double d0, sx, sy;     // center depth + depth slope
  double nx, ny, nz;     // camera-space normal
  double cr, cg, cb;     // view-evaluated color
};

struct AlphaEval {
  double alpha;     // after the alpha_max clamp
  double gauss;     // exp(-m/2)
  double qdx, qdy;  // Q * delta
  double dx, dy;    // pixel - center
  bool clamped;
};

inline AlphaEval eval_alpha(const FlatSurfel& f, double px, double py,
                            double alpha_max) {
  AlphaEval e;
  e.dx = px - f.ux;
  e.dy = py - f.uy;
  e.qdx = f.q00 * e.dx + f.q01 * e.dy;
  e.qdy = f.q01 * e.dx + f.q11 * e.dy;
  const double m = e.dx * e.qdx + e.dy * e.qdy;
  e.gauss = std::exp(-0.5 * m);
  const double a = f.opacity * e.gauss;
  e.clamped = a > alpha_max;
  e.alpha = e.clamped ? alpha_max : a;
  return e;
}

inline double support_sigma(double alpha_min) {
  // Mahalanobis radius outside which alpha < alpha_min for any opacity < 1.
  if (alpha_min <= 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(2.0 * std::log(1.0 / alpha_min)) + 1e-6;
}

inline std::vector<FlatSurfel> flatten_cache(const RenderContext& ctx) {
  std::vector<FlatSurfel> flat(ctx.cache.size());
  for (std::size_t k = 0; k < ctx.cache.size(); ++k) {
    const auto& c = ctx.cache[k];
    const auto& s = c.proj.s;
    FlatSurfel& f = flat[k];
    f.ux = s.screen_center.x();
    f.uy = s.screen_center.y();
    f.q00 = c.proj.cov_inv(0, 0);
    f.q01 = c.proj.cov_inv(0, 1);
    f.q11 = c.proj.cov_inv(1, 1);
    f.opacity = c.opacity;
    f.d0 = s.center_depth;
    f.sx = s.depth_slope.x();
    f.sy = s.depth_slope.y();
    f.nx = s.cam_normal.x();
    f.ny = s.cam_normal.y();
    f.nz = s.cam_normal.z();
    f.cr = c.color.x();
    f.cg = c.color.y();
    f.cb = c.color.z();
  }
  return flat;
}

}  // namespace gsurf::detail
