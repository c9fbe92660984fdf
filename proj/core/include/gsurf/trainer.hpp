#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gsurf/dataset.hpp"
#include "gsurf/render.hpp"
#include "gsurf/surfel.hpp"

namespace gsurf {

struct TrainConfig {
  int total_iters = 15000;

  double lr_position_start = 1.6e-4;
  double lr_position_end = 1.6e-6;  // reached exactly at total_iters
  double lr_rotation = 1.0e-3;
  double lr_scale = 5.0e-3;
  double lr_opacity = 5.0e-2;
  double lr_sh = 2.5e-3;

  double lambda_c_end = 0.1;  // consistency weight, ramped linearly from 0
  double lambda_o = 0.01;
  double lambda_m = 1.0;

  double beta1 = 0.9, beta2 = 0.999, eps = 1e-15;

  // Warm-up renders at 1/4 resolution, then 1/2, then full.
  int warmup_quarter_until = 1000;
  int warmup_half_until = 3000;

  // Densification fires after every `interval` completed iterations inside
  // [start, stop]; screen gradients accumulate over the preceding interval.
  int densify_start = 500;
  int densify_stop = 7500;
  int densify_interval = 100;
  double densify_grad_threshold = 2e-4;  // mean pixel-space gradient norm
  double split_scale_fraction = 0.01;    // of bbox diagonal: clone/split pivot
  double split_shrink = 1.6;
  double prune_opacity = 0.05;
  double prune_scale_fraction = 0.1;     // of bbox diagonal

  std::uint64_t seed = 0;

  bool use_consistency = true;
  bool use_prior = true;
  bool use_opacity_loss = true;
  bool use_mask_loss = true;

  RenderConfig render;  // background is overwritten from the dataset
};

// Per-array Adam moments, resized in lockstep with the SurfelSet.
struct OptimizerState {
  std::vector<Vec3> m_position, v_position;
  std::vector<Vec4> m_rotation, v_rotation;
  std::vector<Vec2> m_log_scale, v_log_scale;
  std::vector<double> m_opacity, v_opacity;
  std::vector<ShCoeffs> m_sh, v_sh;
  std::int64_t step = 0;

  void init(std::size_t n);
  bool consistent(std::size_t n) const;
};

struct IterationLog {
  int iter = 0;
  int view = 0;
  double total = 0;
  double photometric = 0, consistency = 0, normal_prior = 0, opacity = 0, mask = 0;
  std::size_t surfel_count = 0;
  double lr_position = 0;
  double lambda_c = 0;
};

// Resumable snapshot. Continuing from `iter` replays the uninterrupted run
// bitwise as long as `iter` is a multiple of the view count and lands on a
// densification boundary (or outside the densification window), since the
// touch window and gradient accumulators are empty at those points.
struct TrainState {
  SurfelSet surfels;
  OptimizerState opt;
  int iter = 0;  // completed iterations
};

struct TrainResult {
  TrainState state;
  std::vector<IterationLog> log;
  bool aborted = false;
  std::string abort_reason;
};

double lr_position_at(const TrainConfig& cfg, int iter);
double lambda_c_at(const TrainConfig& cfg, int iter);
int warmup_factor(const TrainConfig& cfg, int iter);

// True when a snapshot taken after `completed` iterations resumes bitwise:
// the touch window resets at view-count multiples, and the densification
// accumulators are empty at event boundaries and between windows.
bool checkpoint_aligned(const TrainConfig& cfg, int completed, int n_views);

// Block-mean downscales; trailing rows/columns that do not fill a block are
// dropped, matching CameraView::downscaled.
Image downscale_image(const Image& img, int factor);
Bitmap downscale_mask(const Bitmap& mask, int factor);
Image downscale_normal_map(const Image& normals, int factor);

// Screen-space positional gradient statistics for one densification window.
struct DensifyStats {
  std::vector<double> grad_accum;    // sum of ||dL/d(pixel center)||
  std::vector<std::uint32_t> seen;   // views in which the surfel participated
  void init(std::size_t n);
};

struct DensifyOutcome {
  std::size_t cloned = 0, split = 0, pruned = 0;
};

// Clones small high-gradient surfels (shifted one activated scale along the
// major tangent axis), splits large ones into two children with scale
// divided by split_shrink sampled inside the parent disc, then prunes by
// opacity and world size. Moments for new surfels start at zero; `touched`,
// when given, is remapped alongside with new entries marked touched.
DensifyOutcome densify_and_prune(SurfelSet& s, OptimizerState& opt,
                                 const DensifyStats& stats,
                                 const TrainConfig& cfg, double bbox_diagonal,
                                 std::uint64_t event_seed,
                                 std::vector<std::uint8_t>* touched = nullptr);

// Removes surfels whose flag is zero: invisible from every view over the
// window the caller accumulated. Stats, when given, are remapped in lockstep.
std::size_t prune_untouched(SurfelSet& s, OptimizerState& opt,
                            const std::vector<std::uint8_t>& touched,
                            DensifyStats* stats = nullptr);

using IterCallback =
    std::function<void(const IterationLog&, const SurfelSet&, const OptimizerState&)>;

// One view per iteration in shuffled epoch order: render at the warm-up
// resolution, assemble losses, run the analytic backward pass, apply Adam.
// Densification and the every-epoch gradientless prune run on schedule.
// A non-finite loss aborts and returns the state as a diagnostic snapshot.
TrainResult train(const SceneDataset& data, const TrainConfig& cfg,
                  TrainState start, const IterCallback& on_iter = nullptr);

}  // namespace gsurf
