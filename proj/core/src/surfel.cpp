#include "gsurf/surfel.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace gsurf {

void SurfelSet::resize(std::size_t n) {
  position.resize(n, Vec3::Zero());
  rotation.resize(n, Vec4(1, 0, 0, 0));
  log_scale.resize(n, Vec2::Zero());
  opacity_logit.resize(n, 0.0);
  sh.resize(n, ShCoeffs{});
}

void SurfelSet::reserve(std::size_t n) {
  position.reserve(n);
  rotation.reserve(n);
  log_scale.reserve(n);
  opacity_logit.reserve(n);
  sh.reserve(n);
}

void SurfelSet::push_back(const Vec3& p, const Vec4& q, const Vec2& ls,
                          double op, const ShCoeffs& c) {
  position.push_back(p);
  rotation.push_back(q);
  log_scale.push_back(ls);
  opacity_logit.push_back(op);
  sh.push_back(c);
}

bool SurfelSet::consistent() const {
  const std::size_t n = position.size();
  return rotation.size() == n && log_scale.size() == n &&
         opacity_logit.size() == n && sh.size() == n;
}

Activated activate(const SurfelSet& s, std::size_t i) {
  Activated a;
  a.rotation = quat_to_rotation(s.rotation[i].normalized());
  a.scale = s.log_scale[i].array().exp();
  a.opacity = sigmoid(s.opacity_logit[i]);
  return a;
}

SurfelGeometry build_geometry(const Vec4& rotation_raw, const Vec2& log_scale) {
  SurfelGeometry g;
  g.rotation = quat_to_rotation(rotation_raw.normalized());
  g.scale = log_scale.array().exp();
  const Vec3 sq(g.scale[0] * g.scale[0], g.scale[1] * g.scale[1], 0.0);
  g.covariance = g.rotation * sq.asDiagonal() * g.rotation.transpose();
  g.normal = g.rotation.col(2);
  return g;
}

SurfelGeometry build_geometry(const SurfelSet& s, std::size_t i) {
  return build_geometry(s.rotation[i], s.log_scale[i]);
}

double evaluate_kernel(const SurfelGeometry& g, const Vec3& center,
                       const Vec3& point) {
  const Vec3 local = g.rotation.transpose() * (point - center);
  const double a = local.x() / g.scale[0];
  const double b = local.y() / g.scale[1];
  return std::exp(-0.5 * (a * a + b * b));
}

SurfelSet random_init(const Aabb& bbox, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("random_init: n must be positive");
  const Vec3 ext = bbox.extent();
  if (!(ext.x() > 0 && ext.y() > 0 && ext.z() > 0))
    throw std::invalid_argument("random_init: degenerate bbox");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double spacing = bbox.diagonal() / std::cbrt(static_cast<double>(n));
  const double log_s = std::log(0.5 * spacing);
  const double op = logit(0.1);

  SurfelSet s;
  s.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 p = bbox.min + Vec3(uni(rng) * ext.x(), uni(rng) * ext.y(), uni(rng) * ext.z());
    Vec4 q;
    do {
      q = Vec4(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    } while (q.norm() < 1e-6);
    q.normalize();
    s.push_back(p, q, Vec2(log_s, log_s), op, ShCoeffs{});
  }
  return s;
}

}  // namespace gsurf
