#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "gsurf/parallel.hpp"
#include "render_internal.hpp"

namespace gsurf {

using detail::FlatSurfel;

RenderResult render(const SurfelSet& surfels, const CameraView& camera,
                    const RenderConfig& config) {
  if (!surfels.consistent())
    throw std::invalid_argument("render: inconsistent surfel arrays");
  if (camera.width <= 0 || camera.height <= 0)
    throw std::invalid_argument("render: empty camera");

  const std::size_t n = surfels.count();
  const int w = camera.width, h = camera.height;
  const int threads = resolve_threads(config.threads);

  RenderResult out;
  RenderContext& ctx = out.ctx;
  ctx.camera = camera;
  ctx.config = config;
  ctx.surfel_count = n;
  ctx.visible.assign(n, 0);

  ProjectionOptions popt;
  popt.lowpass = config.lowpass;
  popt.sigma = detail::support_sigma(config.alpha_min);
  popt.cond_limit = config.cond_limit;
  popt.near_clip = config.near_clip;
  const bool bounded = std::isfinite(popt.sigma);

  // Project everything first; cull, then depth-sort the survivors.
  std::vector<FullProjection> proj(n);
  const Vec3 cam_center = camera.center();
  parallel_chunks(static_cast<std::int64_t>(n), threads,
                  [&](int, std::int64_t b, std::int64_t e) {
                    for (std::int64_t i = b; i < e; ++i) {
                      const Activated a = activate(surfels, i);
                      proj[i] = project_surfel_full(a, surfels.position[i], camera, popt);
                    }
                  });

  ctx.order.clear();
  for (std::size_t i = 0; i < n; ++i) {
    if (!proj[i].s.culled) {
      ctx.order.push_back(static_cast<std::uint32_t>(i));
      ctx.visible[i] = 1;
    }
  }
  std::sort(ctx.order.begin(), ctx.order.end(),
            [&](std::uint32_t a, std::uint32_t b) {
              const double da = proj[a].s.center_depth;
              const double db = proj[b].s.center_depth;
              return da < db || (da == db && a < b);
            });

  const std::size_t m = ctx.order.size();
  ctx.cache.resize(m);
  parallel_chunks(static_cast<std::int64_t>(m), threads,
                  [&](int, std::int64_t b, std::int64_t e) {
                    for (std::int64_t k = b; k < e; ++k) {
                      const std::uint32_t i = ctx.order[k];
                      auto& c = ctx.cache[k];
                      c.proj = proj[i];
                      const Activated a = activate(surfels, i);
                      c.rotation = a.rotation;
                      c.scale = a.scale;
                      c.opacity = a.opacity;
                      c.quat_norm = surfels.rotation[i].norm();
                      c.quat_unit = surfels.rotation[i] / c.quat_norm;
                      const Vec3 v = surfels.position[i] - cam_center;
                      c.view_dist = v.norm();
                      c.view_dir = v / c.view_dist;
                      c.color = sh_color(surfels.sh[i], c.view_dir);
                    }
                  });

  const std::vector<FlatSurfel> flat = detail::flatten_cache(ctx);

  // Tile binning; bins keep the global front-to-back order.
  const int ts = config.tile_size;
  ctx.tiles_x = (w + ts - 1) / ts;
  ctx.tiles_y = (h + ts - 1) / ts;
  const int num_tiles = ctx.tiles_x * ctx.tiles_y;
  ctx.bins.assign(num_tiles, {});
  for (std::size_t k = 0; k < m; ++k) {
    int tx0 = 0, tx1 = ctx.tiles_x - 1, ty0 = 0, ty1 = ctx.tiles_y - 1;
    if (bounded) {
      const auto& p = ctx.cache[k].proj;
      const Vec2 u = p.s.screen_center;
      tx0 = std::max(0, static_cast<int>(std::floor((u.x() - p.ext.x()) / ts)));
      tx1 = std::min(ctx.tiles_x - 1, static_cast<int>(std::floor((u.x() + p.ext.x()) / ts)));
      ty0 = std::max(0, static_cast<int>(std::floor((u.y() - p.ext.y()) / ts)));
      ty1 = std::min(ctx.tiles_y - 1, static_cast<int>(std::floor((u.y() + p.ext.y()) / ts)));
    }
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        ctx.bins[ty * ctx.tiles_x + tx].push_back(static_cast<std::uint32_t>(k));
  }

  RenderTarget& t = out.target;
  t.color = Image(h, w, 3);
  t.depth = Image(h, w, 1);
  t.normal = Image(h, w, 3);
  t.alpha = Image(h, w, 1);
  t.coverage = Bitmap(h, w);
  if (config.record_median_depth) t.median_depth = Image(h, w, 1);
  ctx.final_t.assign(static_cast<std::size_t>(h) * w, 1.0);
  ctx.last_hit.assign(static_cast<std::size_t>(h) * w, -1);

  const double amin = config.alpha_min;
  const double amax = config.alpha_max;
  const double tstop = config.t_stop;
  const Vec3 bg = config.background;

  parallel_chunks(num_tiles, threads, [&](int, std::int64_t tb, std::int64_t te) {
    std::vector<std::pair<double, double>> weighted;  // (depth, weight) scratch
    for (std::int64_t tile = tb; tile < te; ++tile) {
      const auto& bin = ctx.bins[tile];
      const int tx = static_cast<int>(tile) % ctx.tiles_x;
      const int ty = static_cast<int>(tile) / ctx.tiles_x;
      const int x0 = tx * ts, x1 = std::min(w, x0 + ts);
      const int y0 = ty * ts, y1 = std::min(h, y0 + ts);
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const double px = x + 0.5, py = y + 0.5;
          double T = 1.0;
          double acc_a = 0.0;
          double acc_c[3] = {0, 0, 0};
          // Depth and normals keep running blend-normalized means instead of
          // weight-sum quotients: agreeing contributors then yield their
          // common value bitwise (w/w is exactly one), so a fronto-parallel
          // surfel renders an exactly constant depth map.
          double mean_d = 0.0, mean_n[3] = {0, 0, 0};
          std::int32_t last = -1;
          if (config.record_median_depth) weighted.clear();
          for (std::size_t s = 0; s < bin.size(); ++s) {
            const FlatSurfel& f = flat[bin[s]];
            const auto e = detail::eval_alpha(f, px, py, amax);
            if (e.alpha < amin || e.alpha <= 0.0) continue;
            const double t_next = T * (1.0 - e.alpha);
            if (t_next < tstop) break;  // stopping surfel excluded
            const double wgt = T * e.alpha;
            acc_c[0] += wgt * f.cr;
            acc_c[1] += wgt * f.cg;
            acc_c[2] += wgt * f.cb;
            const double d = f.d0 + f.sx * e.dx + f.sy * e.dy;
            acc_a += wgt;
            const double frac = wgt / acc_a;
            mean_d += (d - mean_d) * frac;
            mean_n[0] += (f.nx - mean_n[0]) * frac;
            mean_n[1] += (f.ny - mean_n[1]) * frac;
            mean_n[2] += (f.nz - mean_n[2]) * frac;
            if (config.record_median_depth) weighted.emplace_back(d, wgt);
            last = static_cast<std::int32_t>(s);
            T = t_next;
          }
          const std::size_t pix = static_cast<std::size_t>(y) * w + x;
          ctx.final_t[pix] = T;
          ctx.last_hit[pix] = last;
          for (int c = 0; c < 3; ++c) t.color.at(y, x, c) = acc_c[c] + T * bg[c];
          t.alpha.at(y, x) = acc_a;
          const bool valid = acc_a > config.coverage_eps;
          t.coverage.at(y, x) = valid ? 1 : 0;
          if (valid) {
            t.depth.at(y, x) = mean_d;
            for (int c = 0; c < 3; ++c) t.normal.at(y, x, c) = mean_n[c];
          }
          if (config.record_median_depth && valid) {
            std::sort(weighted.begin(), weighted.end());
            const double half = 0.5 * acc_a;
            double cum = 0.0;
            double med = weighted.back().first;
            for (const auto& [d, wgt] : weighted) {
              cum += wgt;
              if (cum >= half) {
                med = d;
                break;
              }
            }
            t.median_depth.at(y, x) = med;
          }
        }
      }
    }
  });

  return out;
}

void GradientBuffer::init(std::size_t n) {
  d_position.assign(n, Vec3::Zero());
  d_rotation.assign(n, Vec4::Zero());
  d_log_scale.assign(n, Vec2::Zero());
  d_opacity_logit.assign(n, 0.0);
  d_sh.assign(n, ShCoeffs{});
  screen_grad_norm.assign(n, 0.0);
  touched.assign(n, 0);
  participated.assign(n, 0);
  max_transmittance_drift = 0.0;
}

}  // namespace gsurf
