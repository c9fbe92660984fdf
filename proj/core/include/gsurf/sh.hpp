#pragma once

#include <array>

#include "gsurf/math.hpp"

namespace gsurf {

// Real spherical harmonics up to degree 3: 16 basis values, 48 coefficients
// per surfel laid out as [basis * 3 + channel].
inline constexpr int kShBasisCount = 16;
inline constexpr int kShCoeffCount = kShBasisCount * 3;
inline constexpr double kSh0 = 0.28209479177387814;

using ShCoeffs = std::array<double, kShCoeffCount>;

std::array<double, kShBasisCount> sh_basis(const Vec3& dir);
std::array<Vec3, kShBasisCount> sh_basis_grad(const Vec3& dir);

// color[ch] = max(0, 0.5 + sum_b basis_b * coeffs[b*3+ch]); dir must be unit.
Vec3 sh_color(const ShCoeffs& coeffs, const Vec3& dir);

// Adjoint of sh_color. Channels clamped at zero pass no gradient.
void sh_color_backward(const ShCoeffs& coeffs, const Vec3& dir,
                       const Vec3& grad_color, ShCoeffs& grad_coeffs,
                       Vec3& grad_dir);

}  // namespace gsurf
