// Occupancy accumulation, volumetric cut, and Chamfer throughput.

#include <benchmark/benchmark.h>

#include <random>

#include "gsurf/extract.hpp"
#include "gsurf/surfel.hpp"

namespace {

using namespace gsurf;

Aabb unit_box() {
  Aabb b;
  b.min = Vec3(-1, -1, -1);
  b.max = Vec3(1, 1, 1);
  return b;
}

std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  return pts;
}

void bm_accumulate_grid(benchmark::State& state) {
  const SurfelSet surfels = random_init(unit_box(), 5000, /*seed=*/3);
  const int res = int(state.range(0));
  for (auto _ : state) {
    OccupancyGrid g = accumulate_grid(surfels, unit_box(), res, /*threads=*/1);
    benchmark::DoNotOptimize(g.values.data());
  }
}

void bm_cut_points(benchmark::State& state) {
  const SurfelSet surfels = random_init(unit_box(), 5000, /*seed=*/3);
  const OccupancyGrid grid = accumulate_grid(surfels, unit_box(), 256, 1);
  OrientedPointCloud cloud;
  cloud.positions = random_points(std::size_t(state.range(0)), 7);
  cloud.normals.assign(cloud.positions.size(), Vec3(0, 0, 1));
  for (auto _ : state) {
    OrientedPointCloud kept = cut_points(cloud, grid, 1.0);
    benchmark::DoNotOptimize(kept.positions.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_chamfer(benchmark::State& state) {
  const std::size_t n = std::size_t(state.range(0));
  const std::vector<Vec3> a = random_points(n, 11);
  const std::vector<Vec3> b = random_points(n, 12);
  for (auto _ : state) {
    double d = chamfer_distance(a, b, /*threads=*/1);
    benchmark::DoNotOptimize(d);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

BENCHMARK(bm_accumulate_grid)->Arg(128)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_cut_points)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_chamfer)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
