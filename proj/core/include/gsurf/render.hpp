#pragma once

#include <cstdint>
#include <vector>

#include "gsurf/camera.hpp"
#include "gsurf/image.hpp"
#include "gsurf/math.hpp"
#include "gsurf/surfel.hpp"

namespace gsurf {

struct RenderConfig {
  int tile_size = 16;
  double alpha_min = 1.0 / 255.0;  // 0 disables the support cutoff (exact-gradient mode)
  double alpha_max = 0.99;
  double t_stop = 1e-4;            // 0 disables early termination
  double coverage_eps = 1e-4;      // min accumulated alpha for a valid pixel
  double lowpass = 0.3;
  double cond_limit = 1e5;
  double near_clip = 1e-2;
  Vec3 background = Vec3::Zero();
  // Multiplier on the gradient flowing through the blended-normal channel
  // into the orientation; 1.0 recovers the exact derivative.
  double normal_grad_scale = 10.0;
  bool record_median_depth = false;  // per-pixel weighted-median surfel depth
  int threads = 0;                   // 0: hardware concurrency
};

struct RenderTarget {
  Image color;    // 3ch, background-composited
  Image depth;    // 1ch, blend-normalized; 0 where coverage invalid
  Image normal;   // 3ch camera-space, blend-normalized, not unit length
  Image alpha;    // 1ch accumulated alpha (sum of blend weights)
  Bitmap coverage;                 // alpha > coverage_eps
  Image median_depth;              // only if record_median_depth
};

// Everything the backward pass needs to replay the forward traversal
// bitwise: per-view sort permutation, cached projections, tile bins and
// per-pixel termination state.
struct RenderContext {
  CameraView camera;
  RenderConfig config;
  std::size_t surfel_count = 0;

  std::vector<std::uint32_t> order;        // surfel ids, front to back
  struct CachedSurfel {
    FullProjection proj;
    double opacity;       // activated
    Vec3 color;           // SH-evaluated for this view
    Vec3 view_dir;        // unit, camera center -> surfel
    double view_dist;
    Vec4 quat_unit;
    double quat_norm;
    Vec2 scale;           // activated
    Mat3 rotation;        // activated
  };
  std::vector<CachedSurfel> cache;         // indexed like `order`
  std::vector<std::uint8_t> visible;       // per surfel id: survived culling

  int tiles_x = 0, tiles_y = 0;
  std::vector<std::vector<std::uint32_t>> bins;  // per tile: positions into `order`

  std::vector<double> final_t;             // per pixel
  std::vector<std::int32_t> last_hit;      // per pixel: last contributing bin slot, -1 none
};

struct RenderResult {
  RenderTarget target;
  RenderContext ctx;
};

RenderResult render(const SurfelSet& surfels, const CameraView& camera,
                    const RenderConfig& config = {});

// Per-pixel upstream gradients w.r.t. the RenderTarget maps. Depth/normal
// gradients refer to the normalized maps and must be zero on invalid pixels.
struct RenderUpstream {
  Image d_color;   // 3ch
  Image d_depth;   // 1ch
  Image d_normal;  // 3ch
  Image d_alpha;   // 1ch
};

struct GradientBuffer {
  std::vector<Vec3> d_position;
  std::vector<Vec4> d_rotation;       // raw quaternion
  std::vector<Vec2> d_log_scale;
  std::vector<double> d_opacity_logit;
  std::vector<ShCoeffs> d_sh;

  std::vector<double> screen_grad_norm;  // ||dL/du|| this view
  std::vector<std::uint8_t> touched;     // received any nonzero gradient
  std::vector<std::uint8_t> participated;  // survived culling this view
  // |T reconstructed at the front - 1| maximum over pixels; the reverse
  // traversal must telescope back to exactly the forward transmittance.
  double max_transmittance_drift = 0.0;

  void init(std::size_t n);
};

GradientBuffer render_backward(const SurfelSet& surfels,
                               const RenderContext& ctx,
                               const RenderTarget& target,
                               const RenderUpstream& upstream);

}  // namespace gsurf
