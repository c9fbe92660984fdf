#include "gsurf/sh.hpp"

namespace gsurf {

namespace {
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792,
                           0.31539156525252005, -1.0925484305920792,
                           0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,
                           -0.4570457994644658, 0.3731763325901154,
                           -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};
}  // namespace

std::array<double, kShBasisCount> sh_basis(const Vec3& dir) {
  const double x = dir.x(), y = dir.y(), z = dir.z();
  const double xx = x * x, yy = y * y, zz = z * z;
  return {
      kSh0,
      -kC1 * y,
      kC1 * z,
      -kC1 * x,
      kC2[0] * x * y,
      kC2[1] * y * z,
      kC2[2] * (2 * zz - xx - yy),
      kC2[3] * x * z,
      kC2[4] * (xx - yy),
      kC3[0] * y * (3 * xx - yy),
      kC3[1] * x * y * z,
      kC3[2] * y * (4 * zz - xx - yy),
      kC3[3] * z * (2 * zz - 3 * xx - 3 * yy),
      kC3[4] * x * (4 * zz - xx - yy),
      kC3[5] * z * (xx - yy),
      kC3[6] * x * (xx - 3 * yy),
  };
}

std::array<Vec3, kShBasisCount> sh_basis_grad(const Vec3& dir) {
  const double x = dir.x(), y = dir.y(), z = dir.z();
  const double xx = x * x, yy = y * y, zz = z * z;
  return {
      Vec3(0, 0, 0),
      Vec3(0, -kC1, 0),
      Vec3(0, 0, kC1),
      Vec3(-kC1, 0, 0),
      Vec3(kC2[0] * y, kC2[0] * x, 0),
      Vec3(0, kC2[1] * z, kC2[1] * y),
      Vec3(-2 * kC2[2] * x, -2 * kC2[2] * y, 4 * kC2[2] * z),
      Vec3(kC2[3] * z, 0, kC2[3] * x),
      Vec3(2 * kC2[4] * x, -2 * kC2[4] * y, 0),
      Vec3(6 * kC3[0] * x * y, 3 * kC3[0] * (xx - yy), 0),
      Vec3(kC3[1] * y * z, kC3[1] * x * z, kC3[1] * x * y),
      Vec3(-2 * kC3[2] * x * y, kC3[2] * (4 * zz - xx - 3 * yy), 8 * kC3[2] * y * z),
      Vec3(-6 * kC3[3] * x * z, -6 * kC3[3] * y * z, kC3[3] * (6 * zz - 3 * xx - 3 * yy)),
      Vec3(kC3[4] * (4 * zz - 3 * xx - yy), -2 * kC3[4] * x * y, 8 * kC3[4] * x * z),
      Vec3(2 * kC3[5] * x * z, -2 * kC3[5] * y * z, kC3[5] * (xx - yy)),
      Vec3(3 * kC3[6] * (xx - yy), -6 * kC3[6] * x * y, 0),
  };
}

Vec3 sh_color(const ShCoeffs& coeffs, const Vec3& dir) {
  const auto basis = sh_basis(dir);
  Vec3 c(0.5, 0.5, 0.5);
  for (int b = 0; b < kShBasisCount; ++b)
    for (int ch = 0; ch < 3; ++ch) c[ch] += basis[b] * coeffs[b * 3 + ch];
  return c.cwiseMax(0.0);
}

void sh_color_backward(const ShCoeffs& coeffs, const Vec3& dir,
                       const Vec3& grad_color, ShCoeffs& grad_coeffs,
                       Vec3& grad_dir) {
  const auto basis = sh_basis(dir);
  const auto basis_grad = sh_basis_grad(dir);
  Vec3 raw(0.5, 0.5, 0.5);
  for (int b = 0; b < kShBasisCount; ++b)
    for (int ch = 0; ch < 3; ++ch) raw[ch] += basis[b] * coeffs[b * 3 + ch];
  for (int ch = 0; ch < 3; ++ch) {
    if (raw[ch] < 0.0) continue;  // clamped channel
    const double g = grad_color[ch];
    for (int b = 0; b < kShBasisCount; ++b) {
      grad_coeffs[b * 3 + ch] += basis[b] * g;
      grad_dir += basis_grad[b] * (coeffs[b * 3 + ch] * g);
    }
  }
}

}  // namespace gsurf
