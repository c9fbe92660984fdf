#include <cmath>
#include <random>

#include "doctest.h"
#include "gsurf/errors.hpp"
#include "gsurf/extract.hpp"
#include "gsurf/kdtree.hpp"
#include "oracles.hpp"

using namespace gsurf;
using namespace oracles;

namespace {

std::vector<Vec3> random_points(int n, unsigned seed, double span = 2.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-span, span);
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  return pts;
}

double brute_chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  auto directed = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double sum = 0;
    for (const Vec3& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& q : to) best = std::min(best, (p - q).squaredNorm());
      sum += std::sqrt(best);
    }
    return sum / static_cast<double>(from.size());
  };
  return 0.5 * (directed(a, b) + directed(b, a));
}

// A grid of fronto-parallel surfels tiling the plane z = depth.
SurfelSet plane_surfels(double depth, int per_side, double extent) {
  SurfelSet s;
  const double pitch = 2.0 * extent / per_side;
  ShCoeffs gray{};
  gray[0] = gray[1] = gray[2] = 0.7;
  for (int i = 0; i < per_side; ++i)
    for (int j = 0; j < per_side; ++j) {
      Vec3 p(-extent + (j + 0.5) * pitch, -extent + (i + 0.5) * pitch, depth);
      s.push_back(p, Vec4(1, 0, 0, 0), Vec2::Constant(std::log(pitch)),
                  logit(0.95), gray);
    }
  return s;
}

}  // namespace

TEST_SUITE("extraction") {
  TEST_CASE("a near-opaque surfel at a voxel center accumulates one") {
    SurfelSet s;
    Aabb box{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
    // Resolution 8 puts a voxel center exactly at (0.125k - 1 + 0.125).
    Vec3 center = Vec3(-1, -1, -1) + Vec3(0.125, 0.125, 0.125) +
                  Vec3(0.25, 0.25, 0.25) * 3.0;
    s.push_back(center, Vec4(1, 0, 0, 0), Vec2::Constant(std::log(0.2)), 40.0,
                ShCoeffs{});
    OccupancyGrid g = accumulate_grid(s, box, 8, 1);
    CHECK(g.at(3, 3, 3) == doctest::Approx(1.0).epsilon(1e-6));
  }

  TEST_CASE("voxels far outside the lateral footprint stay zero") {
    SurfelSet s;
    Aabb box{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
    s.push_back(Vec3(-0.9, -0.9, 0), Vec4(1, 0, 0, 0),
                Vec2::Constant(std::log(0.05)), 40.0, ShCoeffs{});
    OccupancyGrid g = accumulate_grid(s, box, 16, 1);
    // 5 sigma away laterally (0.25 > 3 * 0.05) in the surfel plane.
    int idx = g.voxel_index(Vec3(-0.9 + 0.5, -0.9, 0.0));
    REQUIRE(idx >= 0);
    CHECK(g.values[static_cast<std::size_t>(idx)] == 0.0f);
  }

  TEST_CASE("stacked surfels accumulate additively") {
    SurfelSet s;
    Aabb box{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
    Vec3 center = Vec3(-1 + 0.125 + 0.75, -1 + 0.125 + 0.75, -1 + 0.125 + 0.75);
    for (int k = 0; k < 2; ++k)
      s.push_back(center, Vec4(1, 0, 0, 0), Vec2::Constant(std::log(0.2)),
                  logit(0.6), ShCoeffs{});
    OccupancyGrid g = accumulate_grid(s, box, 8, 1);
    CHECK(g.at(3, 3, 3) == doctest::Approx(1.2).epsilon(1e-6));
  }

  TEST_CASE("grid accumulation is bitwise identical for any worker count") {
    TestScene scene = make_scene(61, 40, 16, 12);
    Aabb box{Vec3(-3, -3, 1), Vec3(3, 3, 6)};
    OccupancyGrid g1 = accumulate_grid(scene.surfels, box, 32, 1);
    OccupancyGrid g4 = accumulate_grid(scene.surfels, box, 32, 4);
    OccupancyGrid g8 = accumulate_grid(scene.surfels, box, 32, 8);
    REQUIRE(g1.values.size() == g4.values.size());
    for (std::size_t i = 0; i < g1.values.size(); ++i) {
      CHECK(g1.values[i] == g4.values[i]);
      CHECK(g1.values[i] == g8.values[i]);
    }
  }

  TEST_CASE("cut keeps occupied voxels, drops empty ones, and is monotone") {
    SurfelSet s;
    Aabb box{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
    Vec3 center = Vec3(-1 + 0.125 + 0.75, -1 + 0.125 + 0.75, -1 + 0.125 + 0.75);
    s.push_back(center, Vec4(1, 0, 0, 0), Vec2::Constant(std::log(0.2)), 40.0,
                ShCoeffs{});
    OccupancyGrid g = accumulate_grid(s, box, 8, 1);

    OrientedPointCloud pts;
    pts.positions = {center, Vec3(-0.9, 0.9, -0.9), Vec3(5, 5, 5)};
    pts.normals = {Vec3(0, 0, 1), Vec3(0, 0, 1), Vec3(0, 0, 1)};

    OrientedPointCloud kept = cut_points(pts, g, 1.0);
    REQUIRE(kept.positions.size() == 1);
    CHECK(kept.positions[0] == center);

    OrientedPointCloud loose = cut_points(pts, g, 0.0);
    CHECK(loose.positions.size() == 2);  // out-of-box point still dropped

    // Raising lambda never adds points, and the cut is idempotent.
    OrientedPointCloud tight = cut_points(pts, g, 2.0);
    CHECK(tight.positions.size() <= kept.positions.size());
    OrientedPointCloud twice = cut_points(kept, g, 1.0);
    CHECK(twice.positions.size() == kept.positions.size());
  }

  TEST_CASE("fusing a fronto-parallel plane yields coplanar points") {
    SurfelSet s = plane_surfels(3.0, 12, 1.5);
    CameraView cam;
    cam.width = 40;
    cam.height = 30;
    cam.fx = cam.fy = 36.0;
    cam.cx = 20.0;
    cam.cy = 15.0;
    RenderConfig cfg;
    cfg.threads = 1;
    RenderResult rr = render(s, cam, cfg);
    REQUIRE(rr.target.coverage.count() > 200);

    FusedView v{&rr.target, &cam, nullptr};
    OrientedPointCloud cloud = fuse_views({v}, nullptr);
    REQUIRE(!cloud.positions.empty());
    for (const Vec3& p : cloud.positions)
      CHECK(std::abs(p.z() - 3.0) <= 1e-3);
    for (const Vec3& n : cloud.normals)
      CHECK(n.norm() == doctest::Approx(1.0).epsilon(1e-6));
  }

  TEST_CASE("a principal-point pixel back-projects along the optical axis") {
    CameraView cam;
    cam.width = 17;
    cam.height = 13;
    cam.fx = cam.fy = 20.0;
    cam.cx = 8.5;  // center of pixel column 8
    cam.cy = 6.5;
    cam.rot = quat_to_rotation(Vec4(0.9, 0.1, -0.2, 0.3).normalized());
    cam.trans = Vec3(0.4, -0.2, 1.0);

    RenderTarget t;
    t.color = Image(13, 17, 3, 0.5);
    t.depth = Image(13, 17, 1);
    t.normal = Image(13, 17, 3);
    t.alpha = Image(13, 17, 1);
    t.coverage = Bitmap(13, 17, false);
    t.coverage.at(6, 8) = 1;
    t.depth.at(6, 8) = 2.75;
    t.normal.at(6, 8, 2) = -0.8;  // unnormalized on purpose

    FusedView v{&t, &cam, nullptr};
    OrientedPointCloud cloud = fuse_views({v}, nullptr);
    REQUIRE(cloud.positions.size() == 1);
    Vec3 expected = cam.cam_to_world(Vec3(0, 0, 2.75));
    CHECK((cloud.positions[0] - expected).norm() <= 1e-12);
    Vec3 expected_n = cam.rot.transpose() * Vec3(0, 0, -1);
    CHECK((cloud.normals[0] - expected_n).norm() <= 1e-12);
  }

  TEST_CASE("fused points re-project onto their source pixels") {
    TestScene scene = make_scene(71, 8, 30, 24);
    RenderConfig cfg;
    cfg.threads = 1;
    RenderResult rr = render(scene.surfels, scene.camera, cfg);
    FusedView v{&rr.target, &scene.camera, nullptr};
    OrientedPointCloud cloud = fuse_views({v}, nullptr);
    REQUIRE(!cloud.positions.empty());

    std::size_t k = 0;
    for (int y = 0; y < scene.camera.height; ++y)
      for (int x = 0; x < scene.camera.width; ++x) {
        if (!rr.target.coverage.at(y, x)) continue;
        Vec3 nc(rr.target.normal.at(y, x, 0), rr.target.normal.at(y, x, 1),
                rr.target.normal.at(y, x, 2));
        if (nc.norm() < 1e-12) continue;
        Vec2 px = scene.camera.project(
            scene.camera.world_to_cam(cloud.positions[k]));
        CHECK(std::abs(px.x() - (x + 0.5)) <= 0.5);
        CHECK(std::abs(px.y() - (y + 0.5)) <= 0.5);
        ++k;
      }
    CHECK(k == cloud.positions.size());
  }

  TEST_CASE("masks and the volumetric cut filter fused points") {
    SurfelSet s = plane_surfels(3.0, 12, 1.5);
    CameraView cam;
    cam.width = 40;
    cam.height = 30;
    cam.fx = cam.fy = 36.0;
    cam.cx = 20.0;
    cam.cy = 15.0;
    RenderConfig cfg;
    cfg.threads = 1;
    RenderResult rr = render(s, cam, cfg);

    Bitmap half(30, 40, false);
    for (int y = 0; y < 30; ++y)
      for (int x = 0; x < 20; ++x) half.at(y, x) = 1;
    FusedView vm{&rr.target, &cam, &half};
    OrientedPointCloud masked = fuse_views({vm}, nullptr);
    for (const Vec3& p : masked.positions) CHECK(p.x() <= 0.1);

    // A grid accumulated from the real surfels keeps the plane points.
    Aabb box{Vec3(-2, -2, 2), Vec3(2, 2, 4)};
    OccupancyGrid g = accumulate_grid(s, box, 32, 1);
    FusedView v{&rr.target, &cam, nullptr};
    FuseOptions opt;
    opt.lambda = 1.0;
    OrientedPointCloud cut = fuse_views({v}, &g, opt);
    CHECK(!cut.positions.empty());

    // An empty grid starves the cut: explicit empty-result error.
    OccupancyGrid empty;
    empty.bbox = box;
    empty.resolution = 8;
    empty.values.assign(8 * 8 * 8, 0.0f);
    CHECK_THROWS_AS(fuse_views({v}, &empty, opt), IoError);
  }

  TEST_CASE("median-depth fusion uses the median map") {
    SurfelSet s = plane_surfels(3.0, 12, 1.5);
    CameraView cam;
    cam.width = 24;
    cam.height = 18;
    cam.fx = cam.fy = 22.0;
    cam.cx = 12.0;
    cam.cy = 9.0;
    RenderConfig cfg;
    cfg.threads = 1;
    cfg.record_median_depth = true;
    RenderResult rr = render(s, cam, cfg);

    FusedView v{&rr.target, &cam, nullptr};
    FuseOptions opt;
    opt.use_median_depth = true;
    OrientedPointCloud cloud = fuse_views({v}, nullptr, opt);
    REQUIRE(!cloud.positions.empty());
    for (const Vec3& p : cloud.positions)
      CHECK(std::abs(p.z() - 3.0) <= 1e-3);

    RenderConfig plain;
    plain.threads = 1;
    RenderResult no_median = render(s, cam, plain);
    FusedView v2{&no_median.target, &cam, nullptr};
    CHECK_THROWS_AS(fuse_views({v2}, nullptr, opt), std::invalid_argument);
  }

  TEST_CASE("chamfer closed forms") {
    std::vector<Vec3> a = {Vec3(0, 0, 0)};
    std::vector<Vec3> b = {Vec3(0, 0, 1)};
    CHECK(chamfer_distance(a, a) == 0.0);
    CHECK(chamfer_distance(a, b) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(chamfer_distance({}, a), std::invalid_argument);
  }

  TEST_CASE("chamfer matches the quadratic brute force") {
    std::vector<Vec3> a = random_points(200, 81);
    std::vector<Vec3> b = random_points(300, 82);
    double fast = chamfer_distance(a, b, 1);
    CHECK(fast == doctest::Approx(brute_chamfer(a, b)).epsilon(1e-12));
    CHECK(chamfer_distance(a, b, 8) == fast);
    CHECK(chamfer_distance(b, a, 3) == doctest::Approx(fast).epsilon(1e-15));
  }

  TEST_CASE("kd-tree nearest distances equal brute force exactly") {
    std::vector<Vec3> pts = random_points(500, 91);
    KdTree tree(pts);
    std::vector<Vec3> queries = random_points(200, 92, 2.5);
    for (const Vec3& q : queries) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& p : pts) best = std::min(best, (p - q).squaredNorm());
      CHECK(tree.nearest(q).dist2 == best);
    }
  }
}
