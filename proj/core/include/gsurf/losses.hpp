#pragma once

#include <vector>

#include "gsurf/camera.hpp"
#include "gsurf/image.hpp"
#include "gsurf/render.hpp"

namespace gsurf {

struct LossWeights {
  double photo_l1 = 0.8;
  double photo_dssim = 0.2;
  double lambda_o = 0.01;
  double lambda_c = 0.0;  // ramped from 0 to 0.1 by the trainer
  double lambda_m = 1.0;
  double prior_align = 0.04;
  double prior_smooth = 0.005;
};

// Mean SSIM (11x11 Gaussian window, sigma 1.5, c1=0.01^2, c2=0.03^2,
// per-channel then averaged). grad_x, when given, receives d(mean)/d(x).
double ssim_mean(const Image& x, const Image& y, Image* grad_x = nullptr);

struct PhotometricLoss {
  double value = 0;
  Image d_rendered;
};
// l1_weight * mean |rendered - reference| + dssim_weight * (1 - SSIM) / 2,
// over the full image (backgrounds are composited on both sides).
PhotometricLoss photometric_loss(const Image& rendered, const Image& reference,
                                 double l1_weight = 0.8,
                                 double dssim_weight = 0.2);

struct DepthNormals {
  Image normal;  // 3ch camera space, unit where valid, oriented toward camera
  Bitmap valid;
};
// Cross product of central-difference backprojections. A pixel is valid only
// if it and its four neighbors carry coverage and the cross product is
// well-conditioned; border pixels are invalid.
DepthNormals depth_to_normal(const Image& depth, const Bitmap& validity,
                             const CameraView& cam);

struct ConsistencyLoss {
  double value = 0;
  Image d_normal;  // 3ch
  Image d_depth;   // 1ch
};
// mean over valid pixels of 1 - dot(renormalized rendered normal, depth
// normal); differentiates through both arguments.
ConsistencyLoss consistency_loss(const Image& normal_map, const Image& depth,
                                 const Bitmap& validity, const CameraView& cam);

struct PriorLoss {
  double value = 0;
  double align_term = 0;   // unweighted means, for logging
  double smooth_term = 0;
  Image d_normal;
};
// align_weight * mean(1 - dot(n, prior)) + smooth_weight * mean
// forward-difference L1 of the raw normal map. Prior may be null (alignment
// skipped); prior pixels with near-zero norm are treated as absent.
PriorLoss normal_prior_loss(const Image& normal_map, const Image* prior,
                            const Bitmap& validity, double align_weight = 0.04,
                            double smooth_weight = 0.005);

struct OpacityLoss {
  double value = 0;
  std::vector<double> d_opacity;  // w.r.t. activated opacity
};
// mean over surfels of exp(-(o - 0.5)^2 / 0.05): pushes opacities binary.
OpacityLoss opacity_loss(const std::vector<double>& opacity);

struct MaskLoss {
  double value = 0;
  Image d_alpha;
};
// mean binary cross entropy between accumulated alpha (clamped to
// [1e-6, 1-1e-6]) and the segmentation mask.
MaskLoss mask_loss(const Image& alpha, const Bitmap& mask);

struct LossBreakdown {
  double total = 0;
  double photometric = 0;
  double consistency = 0;
  double normal_prior = 0;
  double opacity = 0;
  double mask = 0;

  RenderUpstream upstream;         // weighted, ready for render_backward
  std::vector<double> d_opacity;   // weighted, w.r.t. activated opacity
};

// Runs every term and assembles the weighted total plus upstream gradients.
// mask/prior may be null; their terms are then zero.
LossBreakdown assemble(const LossWeights& w, const RenderTarget& target,
                       const Image& reference, const Bitmap* mask,
                       const Image* prior, const CameraView& cam,
                       const std::vector<double>& opacities);

}  // namespace gsurf
