#include <algorithm>
#include <stdexcept>

#include "gsurf/parallel.hpp"
#include "render_internal.hpp"

namespace gsurf {

using detail::FlatSurfel;

namespace {

// Per-surfel gradients in projected space, accumulated over pixels.
struct ScreenGrad {
  double gu[2] = {0, 0};
  double gcov[3] = {0, 0, 0};  // d cov2d (00, 01 symmetric, 11)
  double gd0 = 0;
  double gslope[2] = {0, 0};
  double gn[3] = {0, 0, 0};
  double go = 0;
  double gc[3] = {0, 0, 0};
  bool used = false;

  bool nonzero() const {
    return gu[0] != 0 || gu[1] != 0 || gcov[0] != 0 || gcov[1] != 0 ||
           gcov[2] != 0 || gd0 != 0 || gslope[0] != 0 || gslope[1] != 0 ||
           gn[0] != 0 || gn[1] != 0 || gn[2] != 0 || go != 0 || gc[0] != 0 ||
           gc[1] != 0 || gc[2] != 0;
  }

  void add(const ScreenGrad& o) {
    gu[0] += o.gu[0];
    gu[1] += o.gu[1];
    for (int i = 0; i < 3; ++i) gcov[i] += o.gcov[i];
    gd0 += o.gd0;
    gslope[0] += o.gslope[0];
    gslope[1] += o.gslope[1];
    for (int i = 0; i < 3; ++i) gn[i] += o.gn[i];
    go += o.go;
    for (int i = 0; i < 3; ++i) gc[i] += o.gc[i];
    used = true;
  }
};

}  // namespace

GradientBuffer render_backward(const SurfelSet& surfels,
                               const RenderContext& ctx,
                               const RenderTarget& target,
                               const RenderUpstream& upstream) {
  const std::size_t n = surfels.count();
  if (n != ctx.surfel_count)
    throw std::invalid_argument("render_backward: context built for a different surfel set");
  const CameraView& cam = ctx.camera;
  const int w = cam.width, h = cam.height;
  if (target.color.width != w || target.color.height != h ||
      upstream.d_color.width != w || upstream.d_color.height != h ||
      upstream.d_depth.width != w || upstream.d_normal.width != w ||
      upstream.d_alpha.width != w)
    throw std::invalid_argument("render_backward: upstream/target shape mismatch");

  const RenderConfig& cfg = ctx.config;
  const int threads = resolve_threads(cfg.threads);
  const std::vector<FlatSurfel> flat = detail::flatten_cache(ctx);

  GradientBuffer grad;
  grad.init(n);
  for (std::uint32_t sid : ctx.order) grad.participated[sid] = 1;

  // Effective upstream per pixel w.r.t. the raw accumulators: the depth and
  // normal maps were divided by accumulated alpha, and the color map
  // composites (1 - alpha) * background; both quotients fold into d_alpha.
  const std::size_t npix = static_cast<std::size_t>(h) * w;
  std::vector<double> eff(npix * 8, 0.0);
  parallel_chunks(h, threads, [&](int, std::int64_t rb, std::int64_t re) {
    for (int y = static_cast<int>(rb); y < static_cast<int>(re); ++y) {
      for (int x = 0; x < w; ++x) {
        double* e = &eff[(static_cast<std::size_t>(y) * w + x) * 8];
        const double a = target.alpha.at(y, x);
        const bool valid = target.coverage.at(y, x) != 0;
        double ga = upstream.d_alpha.at(y, x);
        for (int c = 0; c < 3; ++c) {
          e[c] = upstream.d_color.at(y, x, c);
          ga -= e[c] * cfg.background[c];
        }
        if (valid) {
          const double inv_a = 1.0 / a;
          e[3] = upstream.d_depth.at(y, x) * inv_a;
          ga -= e[3] * target.depth.at(y, x);
          for (int c = 0; c < 3; ++c) {
            e[4 + c] = upstream.d_normal.at(y, x, c) * inv_a;
            ga -= e[4 + c] * target.normal.at(y, x, c);
          }
        }
        e[7] = ga;
      }
    }
  });

  const int ts = cfg.tile_size;
  const int num_tiles = ctx.tiles_x * ctx.tiles_y;
  std::vector<std::vector<ScreenGrad>> tile_grads(num_tiles);
  std::vector<double> tile_drift(num_tiles, 0.0);

  parallel_chunks(num_tiles, threads, [&](int, std::int64_t tb, std::int64_t te) {
    for (std::int64_t tile = tb; tile < te; ++tile) {
      const auto& bin = ctx.bins[tile];
      if (bin.empty()) continue;
      auto& recs = tile_grads[tile];
      recs.assign(bin.size(), ScreenGrad{});
      double drift = 0.0;
      const int tx = static_cast<int>(tile) % ctx.tiles_x;
      const int ty = static_cast<int>(tile) / ctx.tiles_x;
      const int x0 = tx * ts, x1 = std::min(w, x0 + ts);
      const int y0 = ty * ts, y1 = std::min(h, y0 + ts);
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const std::size_t pix = static_cast<std::size_t>(y) * w + x;
          const std::int32_t last = ctx.last_hit[pix];
          if (last < 0) continue;
          const double* e = &eff[pix * 8];
          const double px = x + 0.5, py = y + 0.5;

          // Reverse replay: divide the transmittance back out and keep a
          // running suffix of downstream contribution weights.
          double t_cur = ctx.final_t[pix];
          double s_phi = 0.0;
          for (std::int32_t s = last; s >= 0; --s) {
            const FlatSurfel& f = flat[bin[s]];
            const auto a = detail::eval_alpha(f, px, py, cfg.alpha_max);
            if (a.alpha < cfg.alpha_min || a.alpha <= 0.0) continue;
            const double om = 1.0 - a.alpha;
            const double t_i = t_cur / om;
            const double wgt = t_i * a.alpha;
            const double d = f.d0 + f.sx * a.dx + f.sy * a.dy;
            const double phi = e[0] * f.cr + e[1] * f.cg + e[2] * f.cb +
                               e[3] * d + e[4] * f.nx + e[5] * f.ny +
                               e[6] * f.nz + e[7];
            const double dalpha = t_i * phi - s_phi / om;

            ScreenGrad& r = recs[s];
            r.used = true;
            r.gc[0] += wgt * e[0];
            r.gc[1] += wgt * e[1];
            r.gc[2] += wgt * e[2];
            const double gd_pix = wgt * e[3];
            r.gd0 += gd_pix;
            r.gslope[0] += gd_pix * a.dx;
            r.gslope[1] += gd_pix * a.dy;
            r.gu[0] -= gd_pix * f.sx;
            r.gu[1] -= gd_pix * f.sy;
            r.gn[0] += wgt * e[4];
            r.gn[1] += wgt * e[5];
            r.gn[2] += wgt * e[6];
            if (!a.clamped) {
              r.go += dalpha * a.gauss;
              const double gm = -0.5 * a.gauss * (dalpha * f.opacity);
              r.gu[0] -= 2.0 * gm * a.qdx;
              r.gu[1] -= 2.0 * gm * a.qdy;
              r.gcov[0] -= gm * a.qdx * a.qdx;
              r.gcov[1] -= 2.0 * gm * a.qdx * a.qdy;
              r.gcov[2] -= gm * a.qdy * a.qdy;
            }
            s_phi += wgt * phi;
            t_cur = t_i;
          }
          drift = std::max(drift, std::abs(t_cur - 1.0));
        }
      }
      tile_drift[tile] = drift;
    }
  });

  // Fixed tile order: bitwise identical for any worker count.
  std::vector<ScreenGrad> acc(ctx.order.size());
  for (int tile = 0; tile < num_tiles; ++tile) {
    grad.max_transmittance_drift =
        std::max(grad.max_transmittance_drift, tile_drift[tile]);
    const auto& bin = ctx.bins[tile];
    const auto& recs = tile_grads[tile];
    for (std::size_t s = 0; s < recs.size(); ++s)
      if (recs[s].used) acc[bin[s]].add(recs[s]);
  }

  // Chain each surfel's projected-space gradient back to raw parameters.
  parallel_chunks(static_cast<std::int64_t>(ctx.order.size()), threads,
                  [&](int, std::int64_t kb, std::int64_t ke) {
    for (std::int64_t k = kb; k < ke; ++k) {
      const ScreenGrad& a = acc[k];
      // touched means "received a nonzero gradient": pixels can participate
      // yet a zero upstream must leave the buffer zero and touched false.
      if (!a.used || !a.nonzero()) continue;
      const std::uint32_t sid = ctx.order[k];
      const auto& c = ctx.cache[k];
      const FullProjection& fp = c.proj;

      const Vec2 gu(a.gu[0], a.gu[1]);
      grad.screen_grad_norm[sid] = gu.norm();
      grad.touched[sid] = 1;

      grad.d_opacity_logit[sid] = a.go * c.opacity * (1.0 - c.opacity);

      Vec3 gdir = Vec3::Zero();
      const Vec3 gc(a.gc[0], a.gc[1], a.gc[2]);
      sh_color_backward(surfels.sh[sid], c.view_dir, gc, grad.d_sh[sid], gdir);
      Vec3 gp = (gdir - c.view_dir * c.view_dir.dot(gdir)) / c.view_dist;

      Mat2 gcov;
      gcov << a.gcov[0], 0.5 * a.gcov[1], 0.5 * a.gcov[1], a.gcov[2];
      const double sx2 = c.scale[0] * c.scale[0];
      const double sy2 = c.scale[1] * c.scale[1];
      const Mat2 S = Vec2(sx2, sy2).asDiagonal();
      Mat2 gP = 2.0 * gcov * fp.P * S;
      const Vec2 gS = (fp.P.transpose() * gcov * fp.P).diagonal();

      const Vec2 gslope(a.gslope[0], a.gslope[1]);
      const Vec2 zrow(fp.M(2, 0), fp.M(2, 1));
      const Vec2 gzrow = fp.Pinv * gslope;
      const Mat2 gPinv = zrow * gslope.transpose();
      gP -= fp.Pinv.transpose() * gPinv * fp.Pinv.transpose();

      const Mat23 J = affine_jacobian(cam, fp.tc);
      const Mat23 gJ = gP * fp.M.leftCols<2>().transpose();
      const Mat32 gTg = J.transpose() * gP;

      Vec3 gtc = J.transpose() * gu;
      gtc.z() += a.gd0;
      const double z = fp.tc.z();
      const double iz2 = 1.0 / (z * z);
      gtc.x() += gJ(0, 2) * (-cam.fx * iz2);
      gtc.y() += gJ(1, 2) * (-cam.fy * iz2);
      gtc.z() += gJ(0, 0) * (-cam.fx * iz2) + gJ(1, 1) * (-cam.fy * iz2) +
                 gJ(0, 2) * (2.0 * cam.fx * fp.tc.x() * iz2 / z) +
                 gJ(1, 2) * (2.0 * cam.fy * fp.tc.y() * iz2 / z);

      Mat3 gM = Mat3::Zero();
      gM.leftCols<2>() = gTg;
      gM(2, 0) += gzrow[0];
      gM(2, 1) += gzrow[1];
      gM.col(2) += Vec3(a.gn[0], a.gn[1], a.gn[2]) * cfg.normal_grad_scale;
      const Mat3 gR = cam.rot.transpose() * gM;

      grad.d_log_scale[sid] = Vec2(2.0 * sx2 * gS[0], 2.0 * sy2 * gS[1]);
      gp += cam.rot.transpose() * gtc;
      grad.d_position[sid] = gp;

      const auto dR = quat_rotation_jacobian(c.quat_unit);
      Vec4 gq;
      for (int i = 0; i < 4; ++i)
        gq[i] = (dR[i].array() * gR.array()).sum();
      grad.d_rotation[sid] = unit_quat_pullback(surfels.rotation[sid], gq);
    }
  });

  return grad;
}

}  // namespace gsurf
