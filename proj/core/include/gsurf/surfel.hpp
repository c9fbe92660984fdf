#pragma once

#include <cstdint>
#include <vector>

#include "gsurf/math.hpp"
#include "gsurf/sh.hpp"

namespace gsurf {

// Raw (pre-activation) surfel parameters, structure-of-arrays.
// rotation: quaternion (w,x,y,z), any nonzero norm; log_scale: the two
// tangent axes (the third axis is pinned to zero extent); opacity is a logit.
struct SurfelSet {
  std::vector<Vec3> position;
  std::vector<Vec4> rotation;
  std::vector<Vec2> log_scale;
  std::vector<double> opacity_logit;
  std::vector<ShCoeffs> sh;

  std::size_t count() const { return position.size(); }
  void resize(std::size_t n);
  void reserve(std::size_t n);
  void push_back(const Vec3& p, const Vec4& q, const Vec2& ls, double op,
                 const ShCoeffs& c);
  bool consistent() const;
};

// Activated per-surfel quantities.
struct Activated {
  Mat3 rotation;   // columns: tangent1, tangent2, normal
  Vec2 scale;      // exp(log_scale), tangent extents
  double opacity;  // sigmoid(logit), in (0,1)
};

Activated activate(const SurfelSet& s, std::size_t i);

// World-space rank-2 shape of one surfel.
struct SurfelGeometry {
  Mat3 rotation;
  Vec2 scale;
  Mat3 covariance;  // R * diag(sx^2, sy^2, 0) * R^T
  Vec3 normal;      // rotation.col(2)
};

SurfelGeometry build_geometry(const Vec4& rotation_raw, const Vec2& log_scale);
SurfelGeometry build_geometry(const SurfelSet& s, std::size_t i);

// Gaussian weight of a world point: the point is projected onto the surfel
// plane; local z carries no falloff.
double evaluate_kernel(const SurfelGeometry& g, const Vec3& center,
                       const Vec3& point);

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  Vec3 extent() const { return max - min; }
  double diagonal() const { return extent().norm(); }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

// Uniform positions in bbox, uniform orientations, isotropic tangent scales
// of 0.5 * diag / n^(1/3), opacity 0.1, mid-gray DC (all SH coefficients 0).
SurfelSet random_init(const Aabb& bbox, std::size_t n, std::uint64_t seed);

}  // namespace gsurf
