#include <cmath>
#include <random>

#include "doctest.h"
#include "gsurf/losses.hpp"
#include "gsurf/trainer.hpp"
#include "oracles.hpp"

using namespace gsurf;
using namespace oracles;

namespace {

bool sets_bitwise_equal(const SurfelSet& a, const SurfelSet& b) {
  if (a.count() != b.count()) return false;
  for (std::size_t i = 0; i < a.count(); ++i) {
    for (int k = 0; k < 3; ++k)
      if (a.position[i][k] != b.position[i][k]) return false;
    for (int k = 0; k < 4; ++k)
      if (a.rotation[i][k] != b.rotation[i][k]) return false;
    for (int k = 0; k < 2; ++k)
      if (a.log_scale[i][k] != b.log_scale[i][k]) return false;
    if (a.opacity_logit[i] != b.opacity_logit[i]) return false;
    for (std::size_t k = 0; k < kShCoeffCount; ++k)
      if (a.sh[i][k] != b.sh[i][k]) return false;
  }
  return true;
}

// Two-view dataset whose references are renders of a hidden target scene.
SceneDataset make_dataset(std::uint64_t seed, std::size_t n_target, int w, int h) {
  TestScene gt = make_scene(seed, n_target, w, h);
  SceneDataset data;
  data.background = Vec3::Zero();

  Vec3 lo = gt.surfels.position[0], hi = lo;
  for (const Vec3& p : gt.surfels.position) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  data.bbox.min = lo - Vec3::Constant(1.0);
  data.bbox.max = hi + Vec3::Constant(1.0);

  for (int v = 0; v < 2; ++v) {
    ViewData view;
    view.name = "view" + std::to_string(v);
    view.camera = gt.camera;
    view.camera.trans.x() += 0.15 * v;
    RenderConfig cfg;
    cfg.threads = 1;
    RenderResult rr = render(gt.surfels, view.camera, cfg);
    view.image = rr.target.color;
    view.mask = rr.target.coverage;
    view.has_mask = true;
    data.views.push_back(std::move(view));
  }
  return data;
}

TrainConfig quick_config(int iters) {
  TrainConfig cfg;
  cfg.total_iters = iters;
  cfg.warmup_quarter_until = 0;
  cfg.warmup_half_until = 0;
  cfg.densify_start = iters + 1;  // off unless a test re-enables it
  cfg.render.threads = 1;
  return cfg;
}

// random_init sizes surfels at 0.5 * diag / n^(1/3), which for small n lands
// above the oversize-prune bound; shrink and solidify so densification events
// cannot silently empty the set.
SurfelSet survivable_init(const Aabb& bbox, std::size_t n, std::uint64_t seed) {
  SurfelSet s = random_init(bbox, n, seed);
  const double ls = std::log(0.04 * bbox.diagonal());
  for (std::size_t i = 0; i < n; ++i) {
    s.log_scale[i] = Vec2(ls, ls);
    s.opacity_logit[i] = logit(0.3);
  }
  return s;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("position learning rate hits its endpoints and midpoint exactly") {
    TrainConfig cfg;
    CHECK(lr_position_at(cfg, 0) == doctest::Approx(1.6e-4).epsilon(1e-12));
    CHECK(lr_position_at(cfg, 7500) == doctest::Approx(1.6e-5).epsilon(1e-12));
    CHECK(lr_position_at(cfg, 15000) == doctest::Approx(1.6e-6).epsilon(1e-12));
  }

  TEST_CASE("consistency weight ramps linearly to 0.1") {
    TrainConfig cfg;
    CHECK(lambda_c_at(cfg, 0) == 0.0);
    CHECK(lambda_c_at(cfg, 7500) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(lambda_c_at(cfg, 15000) == doctest::Approx(0.1).epsilon(1e-12));
  }

  TEST_CASE("warm-up factors switch at the configured iterations") {
    TrainConfig cfg;
    CHECK(warmup_factor(cfg, 0) == 4);
    CHECK(warmup_factor(cfg, 999) == 4);
    CHECK(warmup_factor(cfg, 1000) == 2);
    CHECK(warmup_factor(cfg, 2999) == 2);
    CHECK(warmup_factor(cfg, 3000) == 1);
    CHECK(warmup_factor(cfg, 14999) == 1);
  }

  TEST_CASE("block downscales average, vote, and renormalize") {
    Image img(4, 4, 1);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x)
        img.at(y, x) = y * 4 + x;
    Image half = downscale_image(img, 2);
    CHECK(half.height == 2);
    CHECK(half.width == 2);
    CHECK(half.at(0, 0) == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
    CHECK(half.at(1, 1) == doctest::Approx((10 + 11 + 14 + 15) / 4.0));

    Bitmap m(4, 4, false);
    m.at(0, 0) = m.at(0, 1) = 1;          // half the block: kept
    m.at(2, 2) = 1;                       // quarter: dropped
    Bitmap mh = downscale_mask(m, 2);
    CHECK(mh.at(0, 0) == 1);
    CHECK(mh.at(1, 1) == 0);
    CHECK(mh.at(0, 1) == 0);

    Image nm(2, 2, 3);
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) {
        nm.at(y, x, 0) = 0.6;
        nm.at(y, x, 2) = -0.6;
      }
    Image nh = downscale_normal_map(nm, 2);
    Vec3 n(nh.at(0, 0, 0), nh.at(0, 0, 1), nh.at(0, 0, 2));
    CHECK(n.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(n.x() == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  }

  TEST_CASE("densification leaves a quiet set unchanged") {
    TestScene scene = make_scene(7, 5, 16, 12);
    SurfelSet before = scene.surfels;
    OptimizerState opt;
    opt.init(5);
    opt.m_position[2] = Vec3(1, 2, 3);  // must survive untouched
    DensifyStats stats;
    stats.init(5);
    TrainConfig cfg;
    DensifyOutcome out = densify_and_prune(scene.surfels, opt, stats, cfg, 10.0, 99);
    CHECK(out.cloned == 0);
    CHECK(out.split == 0);
    CHECK(out.pruned == 0);
    CHECK(sets_bitwise_equal(scene.surfels, before));
    CHECK(opt.m_position[2] == Vec3(1, 2, 3));
    CHECK(opt.consistent(scene.surfels.count()));
  }

  TEST_CASE("low opacity and oversized surfels are pruned") {
    TestScene scene = make_scene(8, 4, 16, 12);
    scene.surfels.opacity_logit[1] = logit(0.01);
    scene.surfels.log_scale[3] = Vec2::Constant(std::log(5.0));  // > 10% of diag
    OptimizerState opt;
    opt.init(4);
    DensifyStats stats;
    stats.init(4);
    TrainConfig cfg;
    Vec3 keep0 = scene.surfels.position[0], keep2 = scene.surfels.position[2];
    DensifyOutcome out = densify_and_prune(scene.surfels, opt, stats, cfg, 10.0, 99);
    CHECK(out.pruned == 2);
    REQUIRE(scene.surfels.count() == 2);
    CHECK(scene.surfels.position[0] == keep0);
    CHECK(scene.surfels.position[1] == keep2);
    CHECK(opt.consistent(2));
  }

  TEST_CASE("a small hot surfel clones along its major axis") {
    TestScene scene = make_scene(9, 3, 16, 12);
    OptimizerState opt;
    opt.init(3);
    opt.m_position[1] = Vec3(4, 5, 6);
    DensifyStats stats;
    stats.init(3);
    stats.grad_accum[1] = 1.0;  // avg 0.5 over 2 views, way past 2e-4
    stats.seen[1] = 2;
    TrainConfig cfg;
    const double diag = 100.0;  // every surfel counts as small
    Activated a = activate(scene.surfels, 1);
    int axis = a.scale.x() >= a.scale.y() ? 0 : 1;
    Vec3 expected = scene.surfels.position[1] + a.rotation.col(axis) * a.scale[axis];

    DensifyOutcome out = densify_and_prune(scene.surfels, opt, stats, cfg, diag, 99);
    CHECK(out.cloned == 1);
    CHECK(out.split == 0);
    REQUIRE(scene.surfels.count() == 4);
    // The clone sits right after its source; zero moments, same raw params.
    CHECK(scene.surfels.position[2] == expected);
    CHECK(scene.surfels.opacity_logit[2] == scene.surfels.opacity_logit[1]);
    CHECK(opt.m_position[1] == Vec3(4, 5, 6));
    CHECK(opt.m_position[2] == Vec3::Zero());
  }

  TEST_CASE("a large hot surfel splits into two shrunken children") {
    TestScene scene = make_scene(10, 3, 16, 12);
    OptimizerState opt;
    opt.init(3);
    DensifyStats stats;
    stats.init(3);
    stats.grad_accum[0] = 1.0;
    stats.seen[0] = 1;
    TrainConfig cfg;
    Activated parent = activate(scene.surfels, 0);
    // Pick the pivot so this surfel counts as large but stays under the
    // world-size prune bound.
    double diag = std::max(parent.scale.x(), parent.scale.y()) /
                  cfg.split_scale_fraction * 0.5;
    Vec2 parent_ls = scene.surfels.log_scale[0];
    Vec3 parent_pos = scene.surfels.position[0];

    DensifyOutcome out = densify_and_prune(scene.surfels, opt, stats, cfg, diag, 99);
    CHECK(out.split == 1);
    REQUIRE(scene.surfels.count() == 4);  // children replace the parent in place
    for (int c = 0; c < 2; ++c) {
      CHECK(scene.surfels.log_scale[c].x() ==
            doctest::Approx(parent_ls.x() - std::log(1.6)).epsilon(1e-15));
      CHECK(scene.surfels.log_scale[c].y() ==
            doctest::Approx(parent_ls.y() - std::log(1.6)).epsilon(1e-15));
      // Children stay in the parent plane: displacement has no normal part.
      Vec3 d = scene.surfels.position[c] - parent_pos;
      CHECK(std::abs(parent.rotation.col(2).dot(d)) <= 1e-12);
      CHECK(d.norm() > 0.0);
    }
    // Same seed, same inputs: the event is reproducible bitwise.
    TestScene again = make_scene(10, 3, 16, 12);
    OptimizerState opt2;
    opt2.init(3);
    densify_and_prune(again.surfels, opt2, stats, cfg, diag, 99);
    CHECK(sets_bitwise_equal(scene.surfels, again.surfels));
  }

  TEST_CASE("prune_untouched keeps exactly the flagged surfels") {
    TestScene scene = make_scene(11, 4, 16, 12);
    OptimizerState opt;
    opt.init(4);
    DensifyStats stats;
    stats.init(4);
    stats.seen[3] = 7;
    Vec3 keep1 = scene.surfels.position[1], keep3 = scene.surfels.position[3];
    std::size_t removed =
        prune_untouched(scene.surfels, opt, {0, 1, 0, 1}, &stats);
    CHECK(removed == 2);
    REQUIRE(scene.surfels.count() == 2);
    CHECK(scene.surfels.position[0] == keep1);
    CHECK(scene.surfels.position[1] == keep3);
    CHECK(stats.seen[1] == 7);
    CHECK(opt.consistent(2));
  }

  TEST_CASE("a surfel invisible from every view is pruned after one epoch") {
    SceneDataset data = make_dataset(21, 5, 24, 18);
    TestScene gt = make_scene(21, 5, 24, 18);
    TrainState start;
    start.surfels = gt.surfels;
    // Behind both cameras: culled everywhere, so never touched.
    start.surfels.push_back(Vec3(0, 0, -5), Vec4(1, 0, 0, 0),
                            Vec2::Constant(std::log(0.05)), 0.5, ShCoeffs{});
    TrainConfig cfg = quick_config(2);
    TrainResult res = train(data, cfg, std::move(start));
    CHECK_FALSE(res.aborted);
    CHECK(res.state.surfels.count() == 5);
    for (const Vec3& p : res.state.surfels.position) CHECK(p.z() > 0.0);
  }

  TEST_CASE("training is deterministic across runs and worker counts") {
    SceneDataset data = make_dataset(31, 6, 26, 20);
    TrainConfig cfg = quick_config(24);
    cfg.densify_start = 8;
    cfg.densify_stop = 16;
    cfg.densify_interval = 4;
    cfg.densify_grad_threshold = 1e-9;  // force clone/split traffic
    cfg.seed = 77;

    SurfelSet init = survivable_init(data.bbox, 10, 5);
    TrainState a0;
    a0.surfels = init;
    TrainResult a = train(data, cfg, std::move(a0));
    REQUIRE(a.state.surfels.count() > 0);

    TrainState b0;
    b0.surfels = init;
    TrainResult b = train(data, cfg, std::move(b0));
    CHECK(sets_bitwise_equal(a.state.surfels, b.state.surfels));

    TrainConfig cfg4 = cfg;
    cfg4.render.threads = 4;
    TrainState c0;
    c0.surfels = init;
    TrainResult c = train(data, cfg4, std::move(c0));
    CHECK(sets_bitwise_equal(a.state.surfels, c.state.surfels));
    CHECK(a.log.size() == c.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
      CHECK(a.log[i].total == c.log[i].total);
      CHECK(a.log[i].surfel_count == c.log[i].surfel_count);
    }
  }

  TEST_CASE("resuming from an aligned snapshot replays the run bitwise") {
    SceneDataset data = make_dataset(41, 6, 26, 20);
    TrainConfig cfg = quick_config(40);
    cfg.densify_start = 10;
    cfg.densify_stop = 30;
    cfg.densify_interval = 10;
    cfg.densify_grad_threshold = 1e-9;
    cfg.seed = 3;

    SurfelSet init = survivable_init(data.bbox, 8, 6);
    TrainState w0;
    w0.surfels = init;

    // 20 is a multiple of the view count and a densification boundary; the
    // snapshot is taken mid-run exactly as a checkpoint writer would.
    TrainState snapshot;
    auto grab = [&](const IterationLog& rec, const SurfelSet& s, const OptimizerState& o) {
      if (rec.iter + 1 == 20) {
        snapshot.surfels = s;
        snapshot.opt = o;
        snapshot.iter = 20;
      }
    };
    TrainResult whole = train(data, cfg, std::move(w0), grab);
    REQUIRE(whole.state.surfels.count() > 0);
    REQUIRE(snapshot.surfels.count() > 0);

    TrainResult rest = train(data, cfg, std::move(snapshot));

    CHECK(sets_bitwise_equal(whole.state.surfels, rest.state.surfels));
    CHECK(whole.state.opt.step == rest.state.opt.step);
    REQUIRE(whole.state.opt.m_position.size() == rest.state.opt.m_position.size());
    REQUIRE_FALSE(whole.state.opt.m_position.empty());
    for (std::size_t i = 0; i < whole.state.opt.m_position.size(); ++i) {
      CHECK(whole.state.opt.m_position[i] == rest.state.opt.m_position[i]);
      CHECK(whole.state.opt.v_sh[i] == rest.state.opt.v_sh[i]);
    }
  }

  TEST_CASE("a non-finite loss aborts with a diagnostic snapshot") {
    SceneDataset data = make_dataset(51, 4, 20, 16);
    TestScene gt = make_scene(51, 4, 20, 16);
    TrainState start;
    start.surfels = gt.surfels;
    start.surfels.sh[0][0] = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg = quick_config(10);
    TrainResult res = train(data, cfg, std::move(start));
    CHECK(res.aborted);
    CHECK(res.abort_reason.find("non-finite") != std::string::npos);
    CHECK(res.state.surfels.count() == 4);
    CHECK(res.log.empty());  // failed on the very first iteration
  }

  TEST_CASE("one tiny Adam step along the gradient does not increase the loss") {
    int good = 0;
    const int trials = 20;
    for (int t = 0; t < trials; ++t) {
      TestScene scene = make_scene(900 + t, 5, 22, 16);
      RenderConfig rcfg;
      rcfg.threads = 1;
      std::mt19937_64 rng(1000 + t);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      Image ref(16, 22, 3);
      for (double& v : ref.v) v = u(rng);

      LossWeights w;
      w.lambda_c = 0.05;
      auto eval = [&](const SurfelSet& s) {
        RenderResult rr = render(s, scene.camera, rcfg);
        std::vector<double> opac(s.count());
        for (std::size_t i = 0; i < s.count(); ++i)
          opac[i] = activate(s, i).opacity;
        return assemble(w, rr.target, ref, nullptr, nullptr, scene.camera, opac);
      };

      LossBreakdown before = eval(scene.surfels);
      RenderResult rr = render(scene.surfels, scene.camera, rcfg);
      GradientBuffer g =
          render_backward(scene.surfels, rr.ctx, rr.target, before.upstream);

      // First Adam step with zero moments: lr * sign(gradient) per entry.
      const double lr = 1e-7;
      SurfelSet s = scene.surfels;
      auto step = [&](double& p, double grad) {
        if (grad != 0.0) p -= lr * (grad > 0 ? 1.0 : -1.0);
      };
      for (std::size_t i = 0; i < s.count(); ++i) {
        for (int k = 0; k < 3; ++k) step(s.position[i][k], g.d_position[i][k]);
        for (int k = 0; k < 4; ++k) step(s.rotation[i][k], g.d_rotation[i][k]);
        for (int k = 0; k < 2; ++k) step(s.log_scale[i][k], g.d_log_scale[i][k]);
        double o = activate(scene.surfels, i).opacity;
        step(s.opacity_logit[i],
             g.d_opacity_logit[i] + before.d_opacity[i] * o * (1.0 - o));
        for (std::size_t k = 0; k < kShCoeffCount; ++k)
          step(s.sh[i][k], g.d_sh[i][k]);
      }
      if (eval(s).total <= before.total + 1e-8) ++good;
    }
    CHECK(good >= 19);
  }

  TEST_CASE("a single surfel fits a constant image within 500 iterations") {
    SceneDataset data;
    data.background = Vec3::Constant(0.6);
    data.bbox.min = Vec3(-1, -1, 1);
    data.bbox.max = Vec3(1, 1, 4);
    for (int v = 0; v < 2; ++v) {
      ViewData view;
      view.name = "v" + std::to_string(v);
      view.camera.width = 32;
      view.camera.height = 32;
      view.camera.fx = view.camera.fy = 30.0;
      view.camera.cx = view.camera.cy = 16.0;
      view.camera.trans.x() = 0.05 * v;
      view.image = Image(32, 32, 3, 0.6);
      data.views.push_back(std::move(view));
    }

    TrainState start;
    ShCoeffs dc{};
    dc[0] = dc[1] = dc[2] = (0.3 - 0.5) / kSh0;  // starts dark gray
    start.surfels.push_back(Vec3(0, 0, 2.5), Vec4(1, 0.1, -0.05, 0.02),
                            Vec2::Constant(std::log(0.4)), logit(0.8), dc);

    TrainConfig cfg = quick_config(500);
    TrainResult res = train(data, cfg, std::move(start));
    CHECK_FALSE(res.aborted);
    CHECK(res.log.back().photometric < 1e-3);
  }
}
