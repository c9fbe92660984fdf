#include "gsurf/camera.hpp"

namespace gsurf {

CameraView CameraView::downscaled(int factor) const {
  CameraView c = *this;
  c.width = width / factor;
  c.height = height / factor;
  const double f = static_cast<double>(factor);
  c.fx = fx / f;
  c.fy = fy / f;
  c.cx = cx / f;
  c.cy = cy / f;
  return c;
}

bool CameraView::same_geometry(const CameraView& o, double tol) const {
  return width == o.width && height == o.height &&
         std::abs(fx - o.fx) <= tol && std::abs(fy - o.fy) <= tol &&
         std::abs(cx - o.cx) <= tol && std::abs(cy - o.cy) <= tol &&
         (rot - o.rot).cwiseAbs().maxCoeff() <= tol &&
         (trans - o.trans).cwiseAbs().maxCoeff() <= tol;
}

Mat23 affine_jacobian(const CameraView& cam, const Vec3& pc) {
  const double z = pc.z();
  const double iz = 1.0 / z;
  const double iz2 = iz * iz;
  Mat23 j;
  j << cam.fx * iz, 0.0, -cam.fx * pc.x() * iz2,
       0.0, cam.fy * iz, -cam.fy * pc.y() * iz2;
  return j;
}

FullProjection project_surfel_full(const Activated& a, const Vec3& position,
                                   const CameraView& cam,
                                   const ProjectionOptions& opt) {
  FullProjection f;
  f.tc = cam.world_to_cam(position);
  if (!(f.tc.z() > opt.near_clip)) return f;  // culled: behind near plane

  f.M = cam.rot * a.rotation;
  const Mat23 j = affine_jacobian(cam, f.tc);
  f.P = j * f.M.leftCols<2>();

  ProjectedSurfel& s = f.s;
  s.screen_center = cam.project(f.tc);
  s.center_depth = f.tc.z();
  s.cam_normal = f.M.col(2);

  const Mat2 cov_raw =
      f.P * Vec2(a.scale[0] * a.scale[0], a.scale[1] * a.scale[1]).asDiagonal() *
      f.P.transpose();
  s.cov2d = cov_raw + Mat2::Identity() * opt.lowpass;
  s.extent_radius = opt.sigma * std::sqrt(sym_eigenvalues2(s.cov2d)[0]);
  f.ext = opt.sigma * Vec2(std::sqrt(s.cov2d(0, 0)), std::sqrt(s.cov2d(1, 1)));

  // Edge-on: the tangent frame collapses on screen and the depth slope is
  // unreliable, drop the surfel for this view.
  if (cond2(f.P) > opt.cond_limit) return f;

  f.Pinv = inverse2(f.P);
  s.depth_slope = f.Pinv.transpose() * Vec2(f.M(2, 0), f.M(2, 1));
  f.cov_inv = inverse2(s.cov2d);

  const Vec2 u = s.screen_center;
  if (u.x() + f.ext.x() < 0.0 || u.x() - f.ext.x() > cam.width ||
      u.y() + f.ext.y() < 0.0 || u.y() - f.ext.y() > cam.height)
    return f;  // sigma box misses the image

  s.culled = false;
  return f;
}

ProjectedSurfel project_surfel(const Activated& a, const Vec3& position,
                               const CameraView& cam,
                               const ProjectionOptions& opt) {
  return project_surfel_full(a, position, cam, opt).s;
}

}  // namespace gsurf
