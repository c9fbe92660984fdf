// Forward and backward rasterization throughput on a synthetic orbit view.

#include <benchmark/benchmark.h>

#include "gsurf/render.hpp"
#include "gsurf/surfel.hpp"
#include "gsurf/synthetic.hpp"

namespace {

using namespace gsurf;

struct Fixture {
  CameraView camera;
  Aabb bbox;
};

const Fixture& fixture() {
  static Fixture f = [] {
    SyntheticSpec spec;
    spec.kind = SceneKind::sphere;
    spec.views = 1;
    spec.width = 256;
    spec.height = 256;
    spec.gt_samples = 1;
    SyntheticScene scene = synthesize(spec);
    return Fixture{scene.dataset.views[0].camera, scene.dataset.bbox};
  }();
  return f;
}

SurfelSet make_surfels(std::size_t n) {
  SurfelSet s = random_init(fixture().bbox, n, /*seed=*/9);
  // random_init sizes surfels for sparse coverage; shrink so a dense set
  // still leaves most of them visible instead of one opaque blob.
  const double ls = std::log(0.35 * fixture().bbox.diagonal() / std::cbrt(double(n)));
  for (std::size_t i = 0; i < n; ++i) s.log_scale[i] = Vec2(ls, ls);
  return s;
}

void bm_render_forward(benchmark::State& state) {
  const SurfelSet surfels = make_surfels(std::size_t(state.range(0)));
  RenderConfig cfg;
  cfg.threads = 1;
  for (auto _ : state) {
    RenderResult r = render(surfels, fixture().camera, cfg);
    benchmark::DoNotOptimize(r.target.color.v.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_render_backward(benchmark::State& state) {
  const SurfelSet surfels = make_surfels(std::size_t(state.range(0)));
  RenderConfig cfg;
  cfg.threads = 1;
  RenderResult r = render(surfels, fixture().camera, cfg);

  RenderUpstream up;
  up.d_color = Image(r.target.color.height, r.target.color.width, 3);
  up.d_depth = Image(r.target.depth.height, r.target.depth.width, 1);
  up.d_normal = Image(r.target.normal.height, r.target.normal.width, 3);
  up.d_alpha = Image(r.target.alpha.height, r.target.alpha.width, 1);
  for (std::size_t i = 0; i < up.d_color.v.size(); ++i)
    up.d_color.v[i] = 1.0 / double(up.d_color.v.size());
  for (int y = 0; y < up.d_depth.height; ++y)
    for (int x = 0; x < up.d_depth.width; ++x)
      if (r.target.coverage.at(y, x)) {
        up.d_depth.at(y, x, 0) = 1e-3;
        for (int c = 0; c < 3; ++c) up.d_normal.at(y, x, c) = 1e-3;
      }

  for (auto _ : state) {
    GradientBuffer g = render_backward(surfels, r.ctx, r.target, up);
    benchmark::DoNotOptimize(g.d_position.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

BENCHMARK(bm_render_forward)->Arg(1000)->Arg(5000)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_render_backward)->Arg(1000)->Arg(5000)->Arg(20000)->Unit(benchmark::kMillisecond);

}  // namespace
