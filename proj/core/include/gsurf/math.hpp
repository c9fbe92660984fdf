#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>

namespace gsurf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat32 = Eigen::Matrix<double, 3, 2>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Hamilton convention, q = (w, x, y, z); q need not be unit length here.
inline Mat3 quat_to_rotation(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

// d(quat_to_rotation)/dq_k at a unit quaternion, k in {w,x,y,z}.
inline std::array<Mat3, 4> quat_rotation_jacobian(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Mat3, 4> d;
  d[0] << 0, -z, y,
          z, 0, -x,
          -y, x, 0;
  d[1] << 0, y, z,
          y, -2 * x, -w,
          z, w, -2 * x;
  d[2] << -2 * y, x, w,
          x, 0, z,
          -w, z, -2 * y;
  d[3] << -2 * z, -w, x,
          w, -2 * z, y,
          x, y, 0;
  for (auto& m : d) m *= 2.0;
  return d;
}

// Pulls a gradient w.r.t. the unit quaternion back to the raw one.
inline Vec4 unit_quat_pullback(const Vec4& q_raw, const Vec4& grad_unit) {
  const double n = q_raw.norm();
  const Vec4 qn = q_raw / n;
  return (grad_unit - qn * qn.dot(grad_unit)) / n;
}

inline Mat2 inverse2(const Mat2& m, double* det_out = nullptr) {
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  if (det_out) *det_out = det;
  Mat2 inv;
  inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
  return inv / det;
}

// Eigenvalues of a symmetric 2x2, descending.
inline Vec2 sym_eigenvalues2(const Mat2& m) {
  const double mid = 0.5 * (m(0, 0) + m(1, 1));
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  const double d = std::sqrt(std::max(0.0, mid * mid - det));
  return {mid + d, mid - d};
}

// Condition number (sigma_max / sigma_min) of a general 2x2.
inline double cond2(const Mat2& m) {
  const Mat2 g = m.transpose() * m;
  const Vec2 ev = sym_eigenvalues2(g);
  if (ev[1] <= 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(ev[0] / ev[1]);
}

// splitmix64; used to derive independent deterministic seeds per event.
inline std::uint64_t hash_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace gsurf
