#include <doctest.h>

#include <Eigen/Geometry>
#include <random>

#include "gsurf/camera.hpp"
#include "gsurf/sh.hpp"
#include "gsurf/surfel.hpp"
#include "oracles.hpp"

using namespace gsurf;

TEST_SUITE("surfel") {
  TEST_CASE("activation applies exp, sigmoid and quaternion normalization") {
    SurfelSet s;
    s.push_back(Vec3(1, 2, 3), Vec4(2, 0, 0, 0), Vec2(std::log(0.25), std::log(2.0)),
                0.0, ShCoeffs{});
    const Activated a = activate(s, 0);
    CHECK(a.scale[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(a.scale[1] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(a.opacity == doctest::Approx(0.5).epsilon(1e-14));
    CHECK((a.rotation - Mat3::Identity()).norm() < 1e-14);
  }

  TEST_CASE("quaternion to rotation matches Eigen for random unit quaternions") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    for (int it = 0; it < 50; ++it) {
      Vec4 q(g(rng), g(rng), g(rng), g(rng));
      q.normalize();
      const Mat3 r = quat_to_rotation(q);
      const Mat3 ref =
          Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
      CHECK((r - ref).cwiseAbs().maxCoeff() < 1e-14);
    }
  }

  TEST_CASE("covariance annihilates the normal and has tangent eigenvalues") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(-2.0, 1.0);
    for (int it = 0; it < 30; ++it) {
      const Vec4 q(g(rng), g(rng), g(rng), g(rng));
      const Vec2 ls(u(rng), u(rng));
      const SurfelGeometry geo = build_geometry(q, ls);
      CHECK((geo.covariance * geo.normal).norm() < 1e-12);
      CHECK(geo.normal.isApprox(geo.rotation.col(2), 1e-14));

      Eigen::SelfAdjointEigenSolver<Mat3> eig(geo.covariance);
      Vec3 expected(0.0, geo.scale.minCoeff() * geo.scale.minCoeff(),
                    geo.scale.maxCoeff() * geo.scale.maxCoeff());
      CHECK((eig.eigenvalues() - expected).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("quaternion double cover builds bitwise-identical geometry") {
    const Vec4 q(0.3, -1.2, 0.5, 2.0);
    const Vec2 ls(-0.7, 0.2);
    const SurfelGeometry a = build_geometry(q, ls);
    const SurfelGeometry b = build_geometry(-q, ls);
    CHECK(a.rotation == b.rotation);
    CHECK(a.covariance == b.covariance);
  }

  TEST_CASE("90 degree x rotation carries the normal onto the rotated z axis") {
    const double c = std::cos(M_PI / 4), s = std::sin(M_PI / 4);
    const SurfelGeometry geo = build_geometry(Vec4(c, s, 0, 0), Vec2(0, 0));
    const Mat3 rx = Eigen::AngleAxisd(M_PI / 2, Vec3::UnitX()).toRotationMatrix();
    CHECK((geo.normal - rx * Vec3::UnitZ()).norm() < 1e-12);
  }

  TEST_CASE("kernel ignores offsets along the normal") {
    const SurfelGeometry geo = build_geometry(Vec4(1, 1, -2, 0.5), Vec2(-0.5, 0.1));
    const Vec3 center(0.3, -0.2, 1.0);
    const Vec3 in_plane = center + 0.7 * geo.rotation.col(0) - 0.2 * geo.rotation.col(1);
    const double w0 = evaluate_kernel(geo, center, in_plane);
    const double w1 = evaluate_kernel(geo, center, in_plane + 5.0 * geo.normal);
    CHECK(w0 == doctest::Approx(w1).epsilon(1e-14));
    CHECK(evaluate_kernel(geo, center, center) == doctest::Approx(1.0));
    const Vec3 one_sigma = center + geo.scale[0] * geo.rotation.col(0);
    CHECK(evaluate_kernel(geo, center, one_sigma) ==
          doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  }

  TEST_CASE("isotropic kernel is invariant to spin about the normal") {
    const Vec2 ls(std::log(0.3), std::log(0.3));
    const SurfelGeometry a = build_geometry(Vec4(1, 0, 0, 0), ls);
    const double ang = 0.8;
    const SurfelGeometry b =
        build_geometry(Vec4(std::cos(ang / 2), 0, 0, std::sin(ang / 2)), ls);
    const Vec3 center(0, 0, 0), p(0.2, -0.1, 0.0);
    CHECK(evaluate_kernel(a, center, p) ==
          doctest::Approx(evaluate_kernel(b, center, p)).epsilon(1e-12));
  }

  TEST_CASE("random init is seeded, bounded and mid-gray") {
    Aabb box{Vec3(-1, -2, 0), Vec3(2, 1, 3)};
    const SurfelSet a = random_init(box, 500, 42);
    const SurfelSet b = random_init(box, 500, 42);
    const SurfelSet c = random_init(box, 500, 43);
    REQUIRE(a.count() == 500);
    CHECK(a.consistent());
    CHECK(a.position == b.position);
    CHECK(a.rotation == b.rotation);
    CHECK(a.position != c.position);

    const double want_scale = 0.5 * box.diagonal() / std::cbrt(500.0);
    for (std::size_t i = 0; i < a.count(); ++i) {
      CHECK(box.contains(a.position[i]));
      CHECK(std::abs(a.rotation[i].norm() - 1.0) < 1e-12);
      CHECK(std::exp(a.log_scale[i][0]) == doctest::Approx(want_scale));
      CHECK(sigmoid(a.opacity_logit[i]) == doctest::Approx(0.1).epsilon(1e-12));
      for (double v : a.sh[i]) CHECK(v == 0.0);
    }
    CHECK_THROWS_AS(random_init(box, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(random_init(Aabb{Vec3(0, 0, 0), Vec3(0, 1, 1)}, 10, 1),
                    std::invalid_argument);
  }
}

TEST_SUITE("sh") {
  TEST_CASE("basis gradients match central differences") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    const double h = 1e-6;
    for (int it = 0; it < 20; ++it) {
      Vec3 d(g(rng), g(rng), g(rng));
      d.normalize();
      const auto grads = sh_basis_grad(d);
      for (int axis = 0; axis < 3; ++axis) {
        Vec3 dp = d, dm = d;
        dp[axis] += h;
        dm[axis] -= h;
        const auto bp = sh_basis(dp), bm = sh_basis(dm);
        for (int b = 0; b < kShBasisCount; ++b) {
          const double fd = (bp[b] - bm[b]) / (2 * h);
          CHECK(grads[b][axis] == doctest::Approx(fd).epsilon(1e-5));
        }
      }
    }
  }

  TEST_CASE("dc-only color is flat over directions") {
    ShCoeffs c{};
    c[0] = 0.7;
    c[1] = -0.4;
    c[2] = 0.1;
    const Vec3 col = sh_color(c, Vec3(0, 0, 1));
    CHECK(col.x() == doctest::Approx(0.5 + kSh0 * 0.7));
    CHECK(col.y() == doctest::Approx(0.5 - kSh0 * 0.4));
    const Vec3 col2 = sh_color(c, Vec3(1, 0, 0));
    CHECK((col - col2).norm() < 1e-15);
  }

  TEST_CASE("color backward matches finite differences and respects the clamp") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    ShCoeffs c{};
    for (auto& v : c) v = u(rng);
    c[1] = -3.0;  // drives channel 1 below zero: clamped
    Vec3 dir(0.3, -0.5, 0.81);
    dir.normalize();

    CHECK(sh_color(c, dir)[1] == 0.0);

    const Vec3 up(0.7, -1.3, 0.4);
    ShCoeffs gc{};
    Vec3 gdir = Vec3::Zero();
    sh_color_backward(c, dir, up, gc, gdir);

    const double h = 1e-6;
    for (int k = 0; k < kShCoeffCount; ++k) {
      ShCoeffs cp = c, cm = c;
      cp[k] += h;
      cm[k] -= h;
      const double fd =
          (up.dot(sh_color(cp, dir)) - up.dot(sh_color(cm, dir))) / (2 * h);
      CHECK(gc[k] == doctest::Approx(fd).epsilon(1e-5));
    }
    for (int axis = 0; axis < 3; ++axis) {
      Vec3 dp = dir, dm = dir;
      dp[axis] += h;
      dm[axis] -= h;
      const double fd =
          (up.dot(sh_color(c, dp)) - up.dot(sh_color(c, dm))) / (2 * h);
      CHECK(gdir[axis] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_SUITE("projection") {
  static CameraView make_cam() {
    CameraView cam;
    cam.width = 64;
    cam.height = 48;
    cam.fx = 70;
    cam.fy = 75;
    cam.cx = 32;
    cam.cy = 24;
    return cam;
  }

  TEST_CASE("affine jacobian matches finite differences of the projection") {
    const CameraView cam = make_cam();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    const double h = 1e-6;
    for (int it = 0; it < 20; ++it) {
      const Vec3 pc(u(rng), u(rng), 2.0 + u(rng));
      const Mat23 j = affine_jacobian(cam, pc);
      for (int axis = 0; axis < 3; ++axis) {
        Vec3 pp = pc, pm = pc;
        pp[axis] += h;
        pm[axis] -= h;
        const Vec2 fd = (cam.project(pp) - cam.project(pm)) / (2 * h);
        CHECK(j(0, axis) == doctest::Approx(fd.x()).epsilon(1e-6));
        CHECK(j(1, axis) == doctest::Approx(fd.y()).epsilon(1e-6));
      }
    }
  }

  TEST_CASE("fronto-parallel surfel: closed-form footprint, exactly flat depth") {
    CameraView cam = make_cam();
    SurfelSet s;
    s.push_back(Vec3(0, 0, 2.0), Vec4(1, 0, 0, 0),
                Vec2(std::log(0.1), std::log(0.2)), 0.0, ShCoeffs{});
    const ProjectedSurfel p = project_surfel(activate(s, 0), s.position[0], cam);
    REQUIRE(!p.culled);
    CHECK(p.screen_center.x() == doctest::Approx(32.0));
    CHECK(p.screen_center.y() == doctest::Approx(24.0));
    CHECK(p.center_depth == 2.0);
    CHECK(p.depth_slope.x() == 0.0);  // exact: tangent plane has no z extent
    CHECK(p.depth_slope.y() == 0.0);
    const double sxx = 70.0 * 0.1 / 2.0, syy = 75.0 * 0.2 / 2.0;
    CHECK(p.cov2d(0, 0) == doctest::Approx(sxx * sxx + 0.3).epsilon(1e-12));
    CHECK(p.cov2d(1, 1) == doctest::Approx(syy * syy + 0.3).epsilon(1e-12));
    CHECK(std::abs(p.cov2d(0, 1)) < 1e-12);
    CHECK(pixel_depth(p, Vec2(10, 40)) == 2.0);
  }

  TEST_CASE("screen covariance matches the dense 3x3 route") {
    const CameraView cam = make_cam();
    auto scene = oracles::make_scene(99, 12, 64, 48);
    for (std::size_t i = 0; i < scene.surfels.count(); ++i) {
      const Activated a = activate(scene.surfels, i);
      const ProjectedSurfel p =
          project_surfel(a, scene.surfels.position[i], cam);
      if (p.culled) continue;
      const Mat2 ref = oracles::cov2d_dense(a, scene.surfels.position[i], cam, 0.3);
      CHECK((p.cov2d - ref).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  TEST_CASE("tilted surfel depth agrees with ray-plane intersection to first order") {
    CameraView cam = make_cam();
    // 45 degrees about x: plane z = 2 + (y_cam - 0).
    const double c = std::cos(M_PI / 8), s = std::sin(M_PI / 8);
    SurfelSet set;
    set.push_back(Vec3(0, 0, 2.0), Vec4(c, s, 0, 0), Vec2(0, 0), 0.0, ShCoeffs{});
    const Activated a = activate(set, 0);
    const ProjectedSurfel p = project_surfel(a, set.position[0], cam);
    REQUIRE(!p.culled);

    const Vec3 n_cam = a.rotation.col(2);
    auto exact = [&](const Vec2& pix) {
      return oracles::ray_plane_depth(cam, pix, Vec3(0, 0, 2.0), n_cam);
    };
    CHECK(pixel_depth(p, p.screen_center) ==
          doctest::Approx(exact(p.screen_center)).epsilon(1e-12));

    for (const Vec2 dir : {Vec2(0, 1), Vec2(1, 1), Vec2(-0.5, 1)}) {
      const Vec2 d8 = p.screen_center + 8.0 * dir;
      const Vec2 d4 = p.screen_center + 4.0 * dir;
      const double e8 = std::abs(pixel_depth(p, d8) - exact(d8));
      const double e4 = std::abs(pixel_depth(p, d4) - exact(d4));
      REQUIRE(e8 > 1e-9);  // the expansion really is first order, not exact
      CHECK(e8 / e4 >= 3.5);
    }
  }

  TEST_CASE("tilted depth changes sign symmetrically about the center") {
    CameraView cam = make_cam();
    cam.fy = cam.fx;
    cam.width = cam.height = 64;
    cam.cx = cam.cy = 32;
    const double c = std::cos(M_PI / 8), s = std::sin(M_PI / 8);
    SurfelSet set;
    set.push_back(Vec3(0, 0, 2.0), Vec4(c, s, 0, 0), Vec2(0, 0), 0.0, ShCoeffs{});
    const ProjectedSurfel p = project_surfel(activate(set, 0), set.position[0], cam);
    for (double dy : {1.0, 3.0, 6.0}) {
      const Vec2 off(0, dy);
      const double up = pixel_depth(p, p.screen_center + off) - p.center_depth;
      const double dn = pixel_depth(p, p.screen_center - off) - p.center_depth;
      REQUIRE(std::abs(up) > 1e-9);
      CHECK(up == doctest::Approx(-dn).epsilon(1e-12));
    }
  }

  TEST_CASE("culling: near plane, edge-on, out of frame") {
    const CameraView cam = make_cam();
    SurfelSet s;
    s.push_back(Vec3(0, 0, -1.0), Vec4(1, 0, 0, 0), Vec2(0, 0), 0.0, ShCoeffs{});
    CHECK(project_surfel(activate(s, 0), s.position[0], cam).culled);

    // Plane containing the view direction: tangent frame collapses on screen.
    const double c = std::cos(M_PI / 4), sn = std::sin(M_PI / 4);
    SurfelSet e;
    e.push_back(Vec3(0, 0, 2.0), Vec4(c, sn, 0, 0), Vec2(-2, -2), 0.0, ShCoeffs{});
    CHECK(project_surfel(activate(e, 0), e.position[0], cam).culled);

    SurfelSet far_off;
    far_off.push_back(Vec3(50, 0, 2.0), Vec4(1, 0, 0, 0), Vec2(-2, -2), 0.0,
                      ShCoeffs{});
    CHECK(project_surfel(activate(far_off, 0), far_off.position[0], cam).culled);
  }

  TEST_CASE("projection is equivariant under rigid world transforms") {
    const CameraView cam = make_cam();
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g;
    for (int it = 0; it < 10; ++it) {
      auto scene = oracles::make_scene(100 + it, 1, 64, 48);
      const Activated a = activate(scene.surfels, 0);
      const ProjectedSurfel base =
          project_surfel(a, scene.surfels.position[0], cam);
      if (base.culled) continue;

      Vec4 tq(g(rng), g(rng), g(rng), g(rng));
      tq.normalize();
      const Mat3 trot = quat_to_rotation(tq);
      const Vec3 tsh(g(rng), g(rng), g(rng));

      SurfelSet moved = scene.surfels;
      moved.position[0] = trot * moved.position[0] + tsh;
      const Mat3 moved_rot = trot * a.rotation;

      CameraView cam2 = cam;
      cam2.rot = cam.rot * trot.transpose();
      cam2.trans = cam.trans - cam2.rot * tsh;

      Activated a2 = a;
      a2.rotation = moved_rot;
      const ProjectedSurfel p2 = project_surfel(a2, moved.position[0], cam2);
      REQUIRE(!p2.culled);
      CHECK((p2.screen_center - base.screen_center).norm() < 1e-9);
      CHECK((p2.cov2d - base.cov2d).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(p2.center_depth == doctest::Approx(base.center_depth).epsilon(1e-12));
      CHECK((p2.depth_slope - base.depth_slope).norm() < 1e-9);
    }
  }
}
