#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gsurf/losses.hpp"
#include "gsurf/math.hpp"

namespace gsurf {
namespace {

double sign_of(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

Vec3 pixel_of(const Image& img, int y, int x) {
  return {img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)};
}

void add_pixel(Image& img, int y, int x, const Vec3& g) {
  img.at(y, x, 0) += g.x();
  img.at(y, x, 1) += g.y();
  img.at(y, x, 2) += g.z();
}

}  // namespace

PhotometricLoss photometric_loss(const Image& rendered, const Image& reference,
                                 double l1_weight, double dssim_weight) {
  if (!rendered.same_shape(reference))
    throw std::invalid_argument("photometric_loss: shape mismatch");
  PhotometricLoss out;
  out.d_rendered = Image(rendered.height, rendered.width, rendered.channels);

  const double inv_n = 1.0 / static_cast<double>(rendered.size());
  double l1 = 0;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    double d = rendered.v[i] - reference.v[i];
    l1 += std::abs(d);
    out.d_rendered.v[i] = l1_weight * sign_of(d) * inv_n;
  }
  l1 *= inv_n;

  Image ssim_grad;
  double ssim = ssim_mean(rendered, reference, &ssim_grad);
  for (std::size_t i = 0; i < rendered.size(); ++i)
    out.d_rendered.v[i] += dssim_weight * (-0.5) * ssim_grad.v[i];

  out.value = l1_weight * l1 + dssim_weight * (1.0 - ssim) / 2.0;
  return out;
}

DepthNormals depth_to_normal(const Image& depth, const Bitmap& validity,
                             const CameraView& cam) {
  if (depth.channels != 1 || depth.height != validity.height ||
      depth.width != validity.width)
    throw std::invalid_argument("depth_to_normal: shape mismatch");
  const int h = depth.height, w = depth.width;
  DepthNormals out;
  out.normal = Image(h, w, 3);
  out.valid = Bitmap(h, w, false);

  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      if (!validity.at(y, x) || !validity.at(y, x - 1) ||
          !validity.at(y, x + 1) || !validity.at(y - 1, x) ||
          !validity.at(y + 1, x))
        continue;
      Vec3 dx = cam.pixel_ray(x + 1.5, y + 0.5) * depth.at(y, x + 1) -
                cam.pixel_ray(x - 0.5, y + 0.5) * depth.at(y, x - 1);
      Vec3 dy = cam.pixel_ray(x + 0.5, y + 1.5) * depth.at(y + 1, x) -
                cam.pixel_ray(x + 0.5, y - 0.5) * depth.at(y - 1, x);
      Vec3 c = dx.cross(dy);
      double nrm = c.norm();
      if (nrm < 1e-12) continue;
      Vec3 n = c / nrm;
      Vec3 p = cam.pixel_ray(x + 0.5, y + 0.5) * depth.at(y, x);
      if (n.dot(p) > 0) n = -n;  // face the camera
      out.normal.at(y, x, 0) = n.x();
      out.normal.at(y, x, 1) = n.y();
      out.normal.at(y, x, 2) = n.z();
      out.valid.at(y, x) = 1;
    }
  }
  return out;
}

ConsistencyLoss consistency_loss(const Image& normal_map, const Image& depth,
                                 const Bitmap& validity, const CameraView& cam) {
  if (normal_map.channels != 3)
    throw std::invalid_argument("consistency_loss: normal map must be 3ch");
  const int h = normal_map.height, w = normal_map.width;
  ConsistencyLoss out;
  out.d_normal = Image(h, w, 3);
  out.d_depth = Image(h, w, 1);

  DepthNormals dn = depth_to_normal(depth, validity, cam);

  // First pass: collect usable pixels so the mean weight is known up front.
  std::vector<std::pair<int, int>> px;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (dn.valid.at(y, x) && pixel_of(normal_map, y, x).norm() >= 1e-12)
        px.emplace_back(y, x);
  if (px.empty()) return out;
  const double scale = 1.0 / static_cast<double>(px.size());

  for (auto [y, x] : px) {
    Vec3 nr = pixel_of(normal_map, y, x);
    double nr_len = nr.norm();
    Vec3 nrh = nr / nr_len;
    Vec3 ndh = pixel_of(dn.normal, y, x);  // unit by construction
    out.value += (1.0 - nrh.dot(ndh)) * scale;

    add_pixel(out.d_normal, y, x,
              -(ndh - nrh * nrh.dot(ndh)) * (scale / nr_len));

    // Recompute the cross-product intermediates for the depth chain.
    Vec3 rxp = cam.pixel_ray(x + 1.5, y + 0.5);
    Vec3 rxm = cam.pixel_ray(x - 0.5, y + 0.5);
    Vec3 ryp = cam.pixel_ray(x + 0.5, y + 1.5);
    Vec3 rym = cam.pixel_ray(x + 0.5, y - 0.5);
    Vec3 dx = rxp * depth.at(y, x + 1) - rxm * depth.at(y, x - 1);
    Vec3 dy = ryp * depth.at(y + 1, x) - rym * depth.at(y - 1, x);
    Vec3 c = dx.cross(dy);
    double c_len = c.norm();
    Vec3 ch = c / c_len;
    double s = ch.dot(cam.pixel_ray(x + 0.5, y + 0.5) * depth.at(y, x)) > 0
                   ? -1.0
                   : 1.0;
    Vec3 g_ndh = -nrh * scale;
    Vec3 g_c = (g_ndh - ch * ch.dot(g_ndh)) * (s / c_len);
    Vec3 g_dx = dy.cross(g_c);
    Vec3 g_dy = g_c.cross(dx);
    out.d_depth.at(y, x + 1) += rxp.dot(g_dx);
    out.d_depth.at(y, x - 1) -= rxm.dot(g_dx);
    out.d_depth.at(y + 1, x) += ryp.dot(g_dy);
    out.d_depth.at(y - 1, x) -= rym.dot(g_dy);
  }
  return out;
}

PriorLoss normal_prior_loss(const Image& normal_map, const Image* prior,
                            const Bitmap& validity, double align_weight,
                            double smooth_weight) {
  if (normal_map.channels != 3)
    throw std::invalid_argument("normal_prior_loss: normal map must be 3ch");
  const int h = normal_map.height, w = normal_map.width;
  PriorLoss out;
  out.d_normal = Image(h, w, 3);

  if (prior) {
    if (!prior->same_shape(normal_map))
      throw std::invalid_argument("normal_prior_loss: prior shape mismatch");
    std::vector<std::pair<int, int>> px;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (validity.at(y, x) && pixel_of(normal_map, y, x).norm() >= 1e-12 &&
            pixel_of(*prior, y, x).norm() >= 0.5)
          px.emplace_back(y, x);
    if (!px.empty()) {
      const double scale = 1.0 / static_cast<double>(px.size());
      for (auto [y, x] : px) {
        Vec3 nr = pixel_of(normal_map, y, x);
        double nr_len = nr.norm();
        Vec3 nrh = nr / nr_len;
        Vec3 np = pixel_of(*prior, y, x).normalized();
        out.align_term += (1.0 - nrh.dot(np)) * scale;
        add_pixel(out.d_normal, y, x,
                  -(np - nrh * nrh.dot(np)) *
                      (align_weight * scale / nr_len));
      }
    }
  }

  // Forward-difference smoothing on the raw map, replicate boundary; a pair
  // counts only when both endpoints carry coverage.
  struct Pair {
    int y0, x0, y1, x1;
  };
  std::vector<Pair> pairs;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!validity.at(y, x)) continue;
      int xr = std::min(x + 1, w - 1), yd = std::min(y + 1, h - 1);
      if (validity.at(y, xr)) pairs.push_back({y, x, y, xr});
      if (validity.at(yd, x)) pairs.push_back({y, x, yd, x});
    }
  }
  if (!pairs.empty()) {
    const double scale = 1.0 / (3.0 * static_cast<double>(pairs.size()));
    for (const auto& p : pairs) {
      for (int c = 0; c < 3; ++c) {
        double d = normal_map.at(p.y1, p.x1, c) - normal_map.at(p.y0, p.x0, c);
        out.smooth_term += std::abs(d) * scale;
        double g = sign_of(d) * smooth_weight * scale;
        out.d_normal.at(p.y1, p.x1, c) += g;
        out.d_normal.at(p.y0, p.x0, c) -= g;
      }
    }
  }

  out.value = align_weight * out.align_term + smooth_weight * out.smooth_term;
  return out;
}

OpacityLoss opacity_loss(const std::vector<double>& opacity) {
  OpacityLoss out;
  out.d_opacity.assign(opacity.size(), 0.0);
  if (opacity.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(opacity.size());
  for (std::size_t i = 0; i < opacity.size(); ++i) {
    double d = opacity[i] - 0.5;
    double e = std::exp(-d * d / 0.05);
    out.value += e * inv_n;
    out.d_opacity[i] = e * (-2.0 * d / 0.05) * inv_n;
  }
  return out;
}

MaskLoss mask_loss(const Image& alpha, const Bitmap& mask) {
  if (alpha.channels != 1 || alpha.height != mask.height ||
      alpha.width != mask.width)
    throw std::invalid_argument("mask_loss: shape mismatch");
  MaskLoss out;
  out.d_alpha = Image(alpha.height, alpha.width, 1);
  const double lo = 1e-6, hi = 1.0 - 1e-6;
  const double inv_n = 1.0 / static_cast<double>(alpha.size());
  for (int y = 0; y < alpha.height; ++y) {
    for (int x = 0; x < alpha.width; ++x) {
      double a = alpha.at(y, x);
      double ac = std::clamp(a, lo, hi);
      double m = mask.at(y, x) ? 1.0 : 0.0;
      out.value -= (m * std::log(ac) + (1.0 - m) * std::log(1.0 - ac)) * inv_n;
      if (a > lo && a < hi)
        out.d_alpha.at(y, x) = ((1.0 - m) / (1.0 - ac) - m / ac) * inv_n;
    }
  }
  return out;
}

LossBreakdown assemble(const LossWeights& w, const RenderTarget& target,
                       const Image& reference, const Bitmap* mask,
                       const Image* prior, const CameraView& cam,
                       const std::vector<double>& opacities) {
  LossBreakdown out;

  PhotometricLoss photo =
      photometric_loss(target.color, reference, w.photo_l1, w.photo_dssim);
  out.photometric = photo.value;
  out.upstream.d_color = std::move(photo.d_rendered);

  ConsistencyLoss cons =
      consistency_loss(target.normal, target.depth, target.coverage, cam);
  out.consistency = cons.value;

  PriorLoss pri = normal_prior_loss(target.normal, prior, target.coverage,
                                    w.prior_align, w.prior_smooth);
  out.normal_prior = pri.value;

  out.upstream.d_normal = std::move(pri.d_normal);
  for (std::size_t i = 0; i < out.upstream.d_normal.size(); ++i)
    out.upstream.d_normal.v[i] += w.lambda_c * cons.d_normal.v[i];
  out.upstream.d_depth = std::move(cons.d_depth);
  for (double& g : out.upstream.d_depth.v) g *= w.lambda_c;

  OpacityLoss op = opacity_loss(opacities);
  out.opacity = op.value;
  out.d_opacity = std::move(op.d_opacity);
  for (double& g : out.d_opacity) g *= w.lambda_o;

  out.upstream.d_alpha = Image(target.alpha.height, target.alpha.width, 1);
  if (mask) {
    MaskLoss mk = mask_loss(target.alpha, *mask);
    out.mask = mk.value;
    out.upstream.d_alpha = std::move(mk.d_alpha);
    for (double& g : out.upstream.d_alpha.v) g *= w.lambda_m;
  }

  out.total = out.photometric + out.normal_prior + w.lambda_c * out.consistency +
              w.lambda_o * out.opacity + (mask ? w.lambda_m * out.mask : 0.0);
  return out;
}

}  // namespace gsurf
