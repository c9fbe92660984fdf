#include <cmath>
#include <random>
#include <stdexcept>

#include "gsurf/trainer.hpp"

namespace gsurf {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Explicit Box-Muller so split sampling does not depend on the standard
// library's normal_distribution draw order.
struct GaussPair {
  double a, b;
};
GaussPair gauss_pair(std::mt19937_64& rng) {
  double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
  double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;          // [0,1)
  double r = std::sqrt(-2.0 * std::log(u1));
  return {r * std::cos(kTwoPi * u2), r * std::sin(kTwoPi * u2)};
}

// Accumulates surviving and new entries so every per-surfel array (raw
// parameters, moments, touch flags) stays in lockstep.
struct Builder {
  SurfelSet s;
  OptimizerState opt;
  std::vector<std::uint8_t> touched;

  void copy_from(const SurfelSet& src, const OptimizerState& sopt,
                 const std::vector<std::uint8_t>* stouch, std::size_t i) {
    s.push_back(src.position[i], src.rotation[i], src.log_scale[i],
                src.opacity_logit[i], src.sh[i]);
    opt.m_position.push_back(sopt.m_position[i]);
    opt.v_position.push_back(sopt.v_position[i]);
    opt.m_rotation.push_back(sopt.m_rotation[i]);
    opt.v_rotation.push_back(sopt.v_rotation[i]);
    opt.m_log_scale.push_back(sopt.m_log_scale[i]);
    opt.v_log_scale.push_back(sopt.v_log_scale[i]);
    opt.m_opacity.push_back(sopt.m_opacity[i]);
    opt.v_opacity.push_back(sopt.v_opacity[i]);
    opt.m_sh.push_back(sopt.m_sh[i]);
    opt.v_sh.push_back(sopt.v_sh[i]);
    touched.push_back(stouch ? (*stouch)[i] : 1);
  }

  void fresh(const Vec3& p, const Vec4& q, const Vec2& ls, double op,
             const ShCoeffs& c) {
    s.push_back(p, q, ls, op, c);
    opt.m_position.push_back(Vec3::Zero());
    opt.v_position.push_back(Vec3::Zero());
    opt.m_rotation.push_back(Vec4::Zero());
    opt.v_rotation.push_back(Vec4::Zero());
    opt.m_log_scale.push_back(Vec2::Zero());
    opt.v_log_scale.push_back(Vec2::Zero());
    opt.m_opacity.push_back(0.0);
    opt.v_opacity.push_back(0.0);
    opt.m_sh.push_back(ShCoeffs{});
    opt.v_sh.push_back(ShCoeffs{});
    touched.push_back(1);
  }
};

}  // namespace

DensifyOutcome densify_and_prune(SurfelSet& s, OptimizerState& opt,
                                 const DensifyStats& stats,
                                 const TrainConfig& cfg, double bbox_diagonal,
                                 std::uint64_t event_seed,
                                 std::vector<std::uint8_t>* touched) {
  const std::size_t n = s.count();
  if (!opt.consistent(n) || stats.grad_accum.size() != n ||
      stats.seen.size() != n || (touched && touched->size() != n))
    throw std::invalid_argument("densify_and_prune: array length mismatch");

  std::mt19937_64 rng(event_seed);
  const double split_at = cfg.split_scale_fraction * bbox_diagonal;
  const double scale_bound = cfg.prune_scale_fraction * bbox_diagonal;

  DensifyOutcome out;
  Builder b;
  b.opt.step = opt.step;

  for (std::size_t i = 0; i < n; ++i) {
    const Activated a = activate(s, i);
    const double max_scale = std::max(a.scale.x(), a.scale.y());
    const double avg_grad =
        stats.seen[i] > 0 ? stats.grad_accum[i] / stats.seen[i] : 0.0;
    const bool hot = avg_grad > cfg.densify_grad_threshold;

    const bool prune = a.opacity < cfg.prune_opacity || max_scale > scale_bound;

    if (hot && max_scale > split_at) {
      // Split: two children at scale/shrink, sampled from the parent disc.
      out.split += 1;
      const Vec2 child_ls(s.log_scale[i].x() - std::log(cfg.split_shrink),
                          s.log_scale[i].y() - std::log(cfg.split_shrink));
      const double child_max = max_scale / cfg.split_shrink;
      for (int c = 0; c < 2; ++c) {
        GaussPair gp = gauss_pair(rng);
        Vec3 p = s.position[i] + a.rotation.col(0) * (a.scale.x() * gp.a) +
                 a.rotation.col(1) * (a.scale.y() * gp.b);
        if (a.opacity < cfg.prune_opacity || child_max > scale_bound) {
          out.pruned += 1;
          continue;
        }
        b.fresh(p, s.rotation[i], child_ls, s.opacity_logit[i], s.sh[i]);
      }
      continue;  // parent consumed by the split
    }

    if (prune) {
      out.pruned += 1;
      continue;
    }
    b.copy_from(s, opt, touched, i);

    if (hot) {
      // Clone: duplicate shifted one activated scale along the major axis.
      out.cloned += 1;
      const int axis = a.scale.x() >= a.scale.y() ? 0 : 1;
      Vec3 p = s.position[i] + a.rotation.col(axis) * a.scale[axis];
      b.fresh(p, s.rotation[i], s.log_scale[i], s.opacity_logit[i], s.sh[i]);
    }
  }

  s = std::move(b.s);
  opt = std::move(b.opt);
  if (touched) *touched = std::move(b.touched);
  return out;
}

std::size_t prune_untouched(SurfelSet& s, OptimizerState& opt,
                            const std::vector<std::uint8_t>& touched,
                            DensifyStats* stats) {
  const std::size_t n = s.count();
  if (!opt.consistent(n) || touched.size() != n ||
      (stats && (stats->grad_accum.size() != n || stats->seen.size() != n)))
    throw std::invalid_argument("prune_untouched: array length mismatch");

  Builder b;
  b.opt.step = opt.step;
  DensifyStats kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (!touched[i]) continue;
    b.copy_from(s, opt, &touched, i);
    if (stats) {
      kept.grad_accum.push_back(stats->grad_accum[i]);
      kept.seen.push_back(stats->seen[i]);
    }
  }
  const std::size_t removed = n - b.s.count();
  s = std::move(b.s);
  opt = std::move(b.opt);
  if (stats) *stats = std::move(kept);
  return removed;
}

}  // namespace gsurf
