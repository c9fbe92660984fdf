#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "gsurf/losses.hpp"
#include "gsurf/trainer.hpp"

namespace gsurf {
namespace {

constexpr std::uint64_t kEpochTag = 0x45504f4348ULL;    // epoch shuffles
constexpr std::uint64_t kDensifyTag = 0x44454e53ULL;    // split sampling

std::vector<int> epoch_order(int n_views, std::uint64_t seed, int epoch) {
  std::vector<int> order(n_views);
  for (int i = 0; i < n_views; ++i) order[i] = i;
  // Hand-rolled Fisher-Yates: std::shuffle draws are implementation-defined.
  std::uint64_t state = hash_seed(seed, kEpochTag ^ static_cast<std::uint64_t>(epoch));
  std::mt19937_64 rng(state);
  for (int i = n_views - 1; i > 0; --i) {
    int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  return order;
}

void validate(const TrainConfig& c) {
  if (c.total_iters <= 0) throw std::invalid_argument("train: total_iters must be positive");
  if (c.lr_position_start <= 0 || c.lr_position_end <= 0 || c.lr_rotation <= 0 ||
      c.lr_scale <= 0 || c.lr_opacity <= 0 || c.lr_sh <= 0)
    throw std::invalid_argument("train: learning rates must be positive");
  if (c.densify_interval <= 0)
    throw std::invalid_argument("train: densify_interval must be positive");
}

// True while the current iteration feeds an upcoming densification event.
bool accum_active(const TrainConfig& c, int iter) {
  int k = iter + 1;
  if (k > c.densify_stop) return false;
  int e = c.densify_start;
  if (k > c.densify_start) {
    int steps = (k - c.densify_start + c.densify_interval - 1) / c.densify_interval;
    e = c.densify_start + steps * c.densify_interval;
  }
  if (e > c.densify_stop) return false;
  return iter >= e - c.densify_interval;
}

bool densify_due(const TrainConfig& c, int completed) {
  return completed >= c.densify_start && completed <= c.densify_stop &&
         (completed - c.densify_start) % c.densify_interval == 0;
}

struct AdamScalar {
  double lr, b1, b2, eps, bc1, bc2;
  void apply(double& theta, double& m, double& v, double g) const {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    theta -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
  }
};

}  // namespace

void OptimizerState::init(std::size_t n) {
  m_position.assign(n, Vec3::Zero());
  v_position.assign(n, Vec3::Zero());
  m_rotation.assign(n, Vec4::Zero());
  v_rotation.assign(n, Vec4::Zero());
  m_log_scale.assign(n, Vec2::Zero());
  v_log_scale.assign(n, Vec2::Zero());
  m_opacity.assign(n, 0.0);
  v_opacity.assign(n, 0.0);
  m_sh.assign(n, ShCoeffs{});
  v_sh.assign(n, ShCoeffs{});
}

bool OptimizerState::consistent(std::size_t n) const {
  return m_position.size() == n && v_position.size() == n &&
         m_rotation.size() == n && v_rotation.size() == n &&
         m_log_scale.size() == n && v_log_scale.size() == n &&
         m_opacity.size() == n && v_opacity.size() == n && m_sh.size() == n &&
         v_sh.size() == n;
}

double lr_position_at(const TrainConfig& cfg, int iter) {
  double t = static_cast<double>(iter) / static_cast<double>(cfg.total_iters);
  return cfg.lr_position_start *
         std::pow(cfg.lr_position_end / cfg.lr_position_start, t);
}

double lambda_c_at(const TrainConfig& cfg, int iter) {
  double t = static_cast<double>(iter) / static_cast<double>(cfg.total_iters);
  return cfg.lambda_c_end * t;
}

int warmup_factor(const TrainConfig& cfg, int iter) {
  if (iter < cfg.warmup_quarter_until) return 4;
  if (iter < cfg.warmup_half_until) return 2;
  return 1;
}

bool checkpoint_aligned(const TrainConfig& cfg, int completed, int n_views) {
  if (completed == 0) return true;
  if (n_views <= 0 || completed % n_views != 0) return false;
  // Accumulators are nonempty iff the previous iteration fed an event that
  // has not fired yet.
  return densify_due(cfg, completed) || !accum_active(cfg, completed - 1);
}

Image downscale_image(const Image& img, int factor) {
  if (factor <= 1) return img;
  const int oh = img.height / factor, ow = img.width / factor;
  Image out(oh, ow, img.channels);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            acc += img.at(y * factor + dy, x * factor + dx, c);
        out.at(y, x, c) = acc * inv;
      }
  return out;
}

Bitmap downscale_mask(const Bitmap& mask, int factor) {
  if (factor <= 1) return mask;
  const int oh = mask.height / factor, ow = mask.width / factor;
  Bitmap out(oh, ow);
  const int half = factor * factor;  // block mean >= 0.5 keeps the pixel
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      int acc = 0;
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx)
          acc += mask.at(y * factor + dy, x * factor + dx) ? 1 : 0;
      out.at(y, x) = 2 * acc >= half ? 1 : 0;
    }
  return out;
}

Image downscale_normal_map(const Image& normals, int factor) {
  Image out = downscale_image(normals, factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      Vec3 n(out.at(y, x, 0), out.at(y, x, 1), out.at(y, x, 2));
      double len = n.norm();
      if (len >= 1e-6) {
        n /= len;
      } else {
        n.setZero();  // mixed-direction block: treated as no prior
      }
      out.at(y, x, 0) = n.x();
      out.at(y, x, 1) = n.y();
      out.at(y, x, 2) = n.z();
    }
  return out;
}

void DensifyStats::init(std::size_t n) {
  grad_accum.assign(n, 0.0);
  seen.assign(n, 0);
}

TrainResult train(const SceneDataset& data, const TrainConfig& cfg,
                  TrainState start, const IterCallback& on_iter) {
  validate(cfg);
  if (data.views.size() < 2)
    throw std::invalid_argument("train: dataset needs at least 2 views");
  if (!start.surfels.consistent())
    throw std::invalid_argument("train: inconsistent surfel arrays");

  TrainResult res;
  SurfelSet& s = start.surfels;
  OptimizerState& opt = start.opt;
  if (!opt.consistent(s.count())) opt.init(s.count());

  const int n_views = static_cast<int>(data.views.size());
  const double diag = data.bbox.diagonal();

  DensifyStats stats;
  stats.init(s.count());
  std::vector<std::uint8_t> window(s.count(), 0);
  std::vector<int> order;
  std::vector<double> opac;

  for (int iter = start.iter; iter < cfg.total_iters; ++iter) {
    const int epoch = iter / n_views, pos = iter % n_views;
    if (pos == 0 || order.empty()) order = epoch_order(n_views, cfg.seed, epoch);

    const ViewData& view = data.views[static_cast<std::size_t>(order[pos])];
    const int factor = warmup_factor(cfg, iter);

    CameraView cam = factor > 1 ? view.camera.downscaled(factor) : view.camera;
    Image ref_small, prior_small;
    Bitmap mask_small;
    const Image* ref = &view.image;
    const Image* prior =
        (cfg.use_prior && view.has_prior) ? &view.prior_normal : nullptr;
    const Bitmap* mask =
        (cfg.use_mask_loss && view.has_mask) ? &view.mask : nullptr;
    if (factor > 1) {
      ref_small = downscale_image(view.image, factor);
      ref = &ref_small;
      if (prior) {
        prior_small = downscale_normal_map(view.prior_normal, factor);
        prior = &prior_small;
      }
      if (mask) {
        mask_small = downscale_mask(view.mask, factor);
        mask = &mask_small;
      }
    }

    RenderConfig rcfg = cfg.render;
    rcfg.background = data.background;
    RenderResult rr = render(s, cam, rcfg);

    LossWeights w;
    w.lambda_c = cfg.use_consistency ? lambda_c_at(cfg, iter) : 0.0;
    w.lambda_o = cfg.use_opacity_loss ? cfg.lambda_o : 0.0;
    w.lambda_m = cfg.lambda_m;
    if (!cfg.use_prior) w.prior_align = w.prior_smooth = 0.0;

    opac.resize(s.count());
    for (std::size_t i = 0; i < s.count(); ++i)
      opac[i] = activate(s, i).opacity;

    LossBreakdown b = assemble(w, rr.target, *ref, mask, prior, cam, opac);
    if (!std::isfinite(b.total)) {
      res.state = std::move(start);
      res.aborted = true;
      res.abort_reason = "non-finite loss at iteration " + std::to_string(iter) +
                         " (view " + std::to_string(order[pos]) + ")";
      return res;
    }

    GradientBuffer g = render_backward(s, rr.ctx, rr.target, b.upstream);

    ++opt.step;
    AdamScalar ad{0, cfg.beta1, cfg.beta2, cfg.eps,
                  1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step)),
                  1.0 - std::pow(cfg.beta2, static_cast<double>(opt.step))};
    const double lr_pos = lr_position_at(cfg, iter);
    for (std::size_t i = 0; i < s.count(); ++i) {
      ad.lr = lr_pos;
      for (int k = 0; k < 3; ++k)
        ad.apply(s.position[i][k], opt.m_position[i][k], opt.v_position[i][k],
                 g.d_position[i][k]);
      ad.lr = cfg.lr_rotation;
      for (int k = 0; k < 4; ++k)
        ad.apply(s.rotation[i][k], opt.m_rotation[i][k], opt.v_rotation[i][k],
                 g.d_rotation[i][k]);
      ad.lr = cfg.lr_scale;
      for (int k = 0; k < 2; ++k)
        ad.apply(s.log_scale[i][k], opt.m_log_scale[i][k], opt.v_log_scale[i][k],
                 g.d_log_scale[i][k]);
      ad.lr = cfg.lr_opacity;
      {
        // The binary-pressure prior reaches the logit around the renderer.
        double go = g.d_opacity_logit[i] +
                    b.d_opacity[i] * opac[i] * (1.0 - opac[i]);
        ad.apply(s.opacity_logit[i], opt.m_opacity[i], opt.v_opacity[i], go);
      }
      ad.lr = cfg.lr_sh;
      for (std::size_t k = 0; k < kShCoeffCount; ++k)
        ad.apply(s.sh[i][k], opt.m_sh[i][k], opt.v_sh[i][k], g.d_sh[i][k]);
    }

    // Render-derived touches only: the opacity prior must not keep invisible
    // surfels alive through the gradientless prune.
    for (std::size_t i = 0; i < s.count(); ++i) window[i] |= g.touched[i];
    if (accum_active(cfg, iter)) {
      for (std::size_t i = 0; i < s.count(); ++i) {
        if (g.participated[i]) {
          stats.grad_accum[i] += g.screen_grad_norm[i];
          stats.seen[i] += 1;
        }
      }
    }

    const int completed = iter + 1;
    if (densify_due(cfg, completed)) {
      densify_and_prune(s, opt, stats, cfg, diag,
                        hash_seed(cfg.seed, kDensifyTag ^
                                                static_cast<std::uint64_t>(completed)),
                        &window);
      stats.init(s.count());
    }
    // Prune only when the window spans a full epoch (resume can start with a
    // partial one).
    if (completed % n_views == 0 && completed - n_views >= start.iter) {
      prune_untouched(s, opt, window, &stats);
      window.assign(s.count(), 0);
    }

    IterationLog rec;
    rec.iter = iter;
    rec.view = order[pos];
    rec.total = b.total;
    rec.photometric = b.photometric;
    rec.consistency = b.consistency;
    rec.normal_prior = b.normal_prior;
    rec.opacity = b.opacity;
    rec.mask = b.mask;
    rec.surfel_count = s.count();
    rec.lr_position = lr_pos;
    rec.lambda_c = w.lambda_c;
    res.log.push_back(rec);
    if (on_iter) on_iter(rec, s, opt);
  }

  start.iter = cfg.total_iters;
  res.state = std::move(start);
  return res;
}

}  // namespace gsurf
