// Command-line front end: synth | train | render | fuse | eval.
// Exit codes: 0 success, 3 io failure, 4 bad arguments, 5 internal error,
// 6 training aborted on a non-finite loss.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gsurf/checkpoint.hpp"
#include "gsurf/dataset.hpp"
#include "gsurf/depth_io.hpp"
#include "gsurf/errors.hpp"
#include "gsurf/extract.hpp"
#include "gsurf/ply_io.hpp"
#include "gsurf/png_io.hpp"
#include "gsurf/synthetic.hpp"
#include "gsurf/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gsurf;

namespace {

const char* kind_name(IoErrorKind k) {
  switch (k) {
    case IoErrorKind::missing_file: return "missing_file";
    case IoErrorKind::malformed_json: return "malformed_json";
    case IoErrorKind::missing_field: return "missing_field";
    case IoErrorKind::dimension_mismatch: return "dimension_mismatch";
    case IoErrorKind::bad_image: return "bad_image";
    case IoErrorKind::bad_ply: return "bad_ply";
    case IoErrorKind::bad_magic: return "bad_magic";
    case IoErrorKind::version_mismatch: return "version_mismatch";
    case IoErrorKind::checksum_mismatch: return "checksum_mismatch";
    case IoErrorKind::truncated: return "truncated";
    case IoErrorKind::empty_result: return "empty_result";
    case IoErrorKind::write_failure: return "write_failure";
  }
  return "unknown";
}

// PSNR against a [0,1] peak over mask-interior pixels; identical content
// reports the 999 dB sentinel instead of infinity.
constexpr double kPsnrSentinel = 999.0;

double psnr(const Image& a, const Image& b, const Bitmap* mask) {
  double se = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (mask && !mask->at(y, x)) continue;
      for (int c = 0; c < a.channels; ++c) {
        const double d = a.at(y, x, c) - b.at(y, x, c);
        se += d * d;
        ++n;
      }
    }
  if (n == 0) return kPsnrSentinel;
  const double mse = se / static_cast<double>(n);
  if (mse <= 0.0) return kPsnrSentinel;
  return 10.0 * std::log10(1.0 / mse);
}

void write_normal_png(const std::string& path, const Image& normal,
                      const Bitmap& coverage) {
  Image enc(normal.height, normal.width, 3, 0.5);
  for (int y = 0; y < normal.height; ++y)
    for (int x = 0; x < normal.width; ++x) {
      if (!coverage.at(y, x)) continue;
      Vec3 n(normal.at(y, x, 0), normal.at(y, x, 1), normal.at(y, x, 2));
      const double len = n.norm();
      if (len < 1e-12) continue;
      n /= len;
      for (int c = 0; c < 3; ++c) enc.at(y, x, c) = 0.5 * (n[c] + 1.0);
    }
  write_png_rgb8(path, enc);
}

struct SynthArgs {
  std::string scene, out;
  int views = 24, width = 128, height = 128;
  double radius = 3.0, elevation = 30.0;
  std::uint64_t seed = 0;
  std::size_t gt_samples = 120000;
};

int run_synth(const SynthArgs& a) {
  SyntheticSpec spec;
  spec.kind = scene_kind_from_name(a.scene);
  spec.views = a.views;
  spec.width = a.width;
  spec.height = a.height;
  spec.camera_radius = a.radius;
  spec.elevation_deg = a.elevation;
  spec.seed = a.seed;
  spec.gt_samples = a.gt_samples;

  SyntheticScene scene = synthesize(spec);
  write_scene_with_gt(a.out, scene);

  json summary;
  summary["scene"] = a.scene;
  summary["views"] = a.views;
  summary["gt_points"] = scene.gt_points.positions.size();
  summary["out"] = a.out;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

struct TrainArgs {
  std::string scene, out, init_points, resume;
  int iters = 15000;
  std::uint64_t seed = 0;
  std::size_t init_count = 2000;
  int threads = 0;
  int checkpoint_every = 0;
  double densify_threshold = -1.0;  // <0: keep the config default
  bool no_consistency = false, no_prior = false, no_opacity = false, no_mask = false;
};

// Schedules are tuned for the 15000-iteration default; shorter or longer
// budgets stretch the warm-up and densification windows proportionally.
void rescale_schedule(TrainConfig& cfg, int iters) {
  cfg.total_iters = iters;
  if (iters == 15000) return;
  const double f = static_cast<double>(iters) / 15000.0;
  auto scaled = [f](int v) { return static_cast<int>(std::lround(v * f)); };
  cfg.warmup_quarter_until = scaled(cfg.warmup_quarter_until);
  cfg.warmup_half_until = scaled(cfg.warmup_half_until);
  cfg.densify_interval = std::max(1, scaled(cfg.densify_interval));
  cfg.densify_start = std::max(cfg.densify_interval, scaled(cfg.densify_start));
  cfg.densify_stop = scaled(cfg.densify_stop);
}

json log_row(const IterationLog& rec) {
  json row;
  row["iter"] = rec.iter;
  row["view"] = rec.view;
  row["total"] = rec.total;
  row["photometric"] = rec.photometric;
  row["consistency"] = rec.consistency;
  row["normal_prior"] = rec.normal_prior;
  row["opacity"] = rec.opacity;
  row["mask"] = rec.mask;
  row["surfels"] = rec.surfel_count;
  row["lr_position"] = rec.lr_position;
  row["lambda_c"] = rec.lambda_c;
  return row;
}

int run_train(const TrainArgs& a) {
  SceneDataset data = load_scene(a.scene);
  fs::create_directories(a.out);

  TrainConfig cfg;
  TrainState state;
  if (!a.resume.empty()) {
    Checkpoint ck = load_checkpoint(a.resume);
    cfg = ck.config;
    state = std::move(ck.state);
    if (a.iters > cfg.total_iters) cfg.total_iters = a.iters;
  } else {
    cfg.seed = a.seed;
    rescale_schedule(cfg, a.iters);
    if (a.densify_threshold >= 0) cfg.densify_grad_threshold = a.densify_threshold;
    cfg.use_consistency = !a.no_consistency;
    cfg.use_prior = !a.no_prior;
    cfg.use_opacity_loss = !a.no_opacity;
    cfg.use_mask_loss = !a.no_mask;
    state.surfels = a.init_points.empty()
                        ? random_init(data.bbox, a.init_count, a.seed)
                        : import_sparse_points(a.init_points, a.seed);
    state.opt.init(state.surfels.count());
  }
  cfg.render.threads = a.threads;

  const std::string ckpt_path = (fs::path(a.out) / "checkpoint.gsrf").string();
  std::ofstream log_stream(fs::path(a.out) / "log.jsonl");
  if (!log_stream)
    throw IoError(IoErrorKind::write_failure, a.out, "cannot open log.jsonl");

  const int n_views = static_cast<int>(data.views.size());
  auto on_iter = [&](const IterationLog& rec, const SurfelSet& s,
                     const OptimizerState& opt) {
    log_stream << log_row(rec).dump() << "\n";
    const int completed = rec.iter + 1;
    if (a.checkpoint_every > 0 && completed % a.checkpoint_every == 0 &&
        completed < cfg.total_iters && checkpoint_aligned(cfg, completed, n_views)) {
      Checkpoint ck;
      ck.config = cfg;
      ck.state.surfels = s;
      ck.state.opt = opt;
      ck.state.iter = completed;
      ck.seed = cfg.seed;
      save_checkpoint(ckpt_path, ck);
    }
  };

  TrainResult res = train(data, cfg, std::move(state), on_iter);
  log_stream.close();

  Checkpoint final;
  final.config = cfg;
  final.state = std::move(res.state);
  final.seed = cfg.seed;
  save_checkpoint(a.resume.empty() && !res.aborted
                      ? ckpt_path
                      : (res.aborted ? (fs::path(a.out) / "abort.gsrf").string()
                                     : ckpt_path),
                  final);

  json summary;
  summary["iterations"] = final.state.iter;
  summary["views"] = n_views;
  summary["surfels"] = final.state.surfels.count();
  summary["aborted"] = res.aborted;
  if (res.aborted) summary["abort_reason"] = res.abort_reason;
  if (!res.log.empty()) {
    summary["final_total"] = res.log.back().total;
    summary["final_photometric"] = res.log.back().photometric;
  }
  std::ofstream(fs::path(a.out) / "train_summary.json") << summary.dump(2) << "\n";
  std::cout << summary.dump(2) << "\n";

  if (res.aborted) {
    std::cerr << "training aborted: " << res.abort_reason << "\n";
    return 6;
  }
  return 0;
}

struct RenderArgs {
  std::string checkpoint, scene, out;
  int view = -1;
  int threads = 0;
};

int run_render(const RenderArgs& a) {
  SceneDataset data = load_scene(a.scene);
  Checkpoint ck = load_checkpoint(a.checkpoint);
  fs::create_directories(a.out);

  RenderConfig rcfg = ck.config.render;
  rcfg.background = data.background;
  rcfg.threads = a.threads;

  int count = 0;
  for (int v = 0; v < static_cast<int>(data.views.size()); ++v) {
    if (a.view >= 0 && v != a.view) continue;
    const ViewData& view = data.views[v];
    RenderResult rr = render(ck.state.surfels, view.camera, rcfg);
    const fs::path base = fs::path(a.out) / view.name;
    write_png_rgb8(base.string() + "_color.png", rr.target.color);
    write_depth_png(base.string() + "_depth.png", base.string() + "_depth.json",
                    rr.target.depth);
    write_normal_png(base.string() + "_normal.png", rr.target.normal,
                     rr.target.coverage);
    ++count;
  }
  if (count == 0)
    throw std::invalid_argument("render: --view is out of range");

  json summary;
  summary["rendered_views"] = count;
  summary["out"] = a.out;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

struct FuseArgs {
  std::string checkpoint, scene, out = "fused.ply";
  bool no_cut = false;
  std::string cut_mode = "grid";
  int grid_res = 512;
  double lambda_cut = 1.0;
  int threads = 0;
};

int run_fuse(const FuseArgs& a) {
  SceneDataset data = load_scene(a.scene);
  Checkpoint ck = load_checkpoint(a.checkpoint);

  const bool median = a.cut_mode == "median";
  RenderConfig rcfg = ck.config.render;
  rcfg.background = data.background;
  rcfg.threads = a.threads;
  rcfg.record_median_depth = median;

  std::vector<RenderResult> renders;
  renders.reserve(data.views.size());
  for (const ViewData& view : data.views)
    renders.push_back(render(ck.state.surfels, view.camera, rcfg));

  std::vector<FusedView> fused;
  for (std::size_t v = 0; v < data.views.size(); ++v) {
    FusedView fv;
    fv.target = &renders[v].target;
    fv.camera = &data.views[v].camera;
    fv.mask = data.views[v].has_mask ? &data.views[v].mask : nullptr;
    fused.push_back(fv);
  }

  // grid mode carves fused points by accumulated opacity; median mode relies
  // on the per-pixel median depth instead and skips the volumetric cut.
  std::optional<OccupancyGrid> grid;
  if (!a.no_cut && !median)
    grid = accumulate_grid(ck.state.surfels, data.bbox, a.grid_res, a.threads);

  FuseOptions opt;
  opt.use_median_depth = median;
  opt.lambda = a.lambda_cut;
  OrientedPointCloud cloud = fuse_views(fused, grid ? &*grid : nullptr, opt);

  if (const fs::path parent = fs::path(a.out).parent_path(); !parent.empty())
    fs::create_directories(parent);
  write_ply(a.out, cloud);

  json summary;
  summary["points"] = cloud.positions.size();
  summary["cut"] = !a.no_cut;
  summary["cut_mode"] = median ? "median" : "grid";
  summary["out"] = a.out;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

struct EvalArgs {
  std::string ply, ref, checkpoint, scene;
  int threads = 0;
};

int run_eval(const EvalArgs& a) {
  json report;
  if (!a.ply.empty() || !a.ref.empty()) {
    if (a.ply.empty() || a.ref.empty())
      throw std::invalid_argument("eval: --ply and --ref go together");
    OrientedPointCloud pa = read_ply(a.ply);
    OrientedPointCloud pb = read_ply(a.ref);
    report["chamfer"] = chamfer_distance(pa.positions, pb.positions, a.threads);
  }
  if (!a.checkpoint.empty() || !a.scene.empty()) {
    if (a.checkpoint.empty() || a.scene.empty())
      throw std::invalid_argument("eval: --checkpoint and --scene go together");
    SceneDataset data = load_scene(a.scene);
    Checkpoint ck = load_checkpoint(a.checkpoint);
    RenderConfig rcfg = ck.config.render;
    rcfg.background = data.background;
    rcfg.threads = a.threads;

    json per_view = json::array();
    double sum = 0.0;
    for (const ViewData& view : data.views) {
      RenderResult rr = render(ck.state.surfels, view.camera, rcfg);
      const double db =
          psnr(rr.target.color, view.image, view.has_mask ? &view.mask : nullptr);
      per_view.push_back(db);
      sum += db;
    }
    report["psnr"] = per_view;
    report["psnr_mean"] = sum / static_cast<double>(data.views.size());
    report["psnr_sentinel"] = kPsnrSentinel;
  }
  if (report.empty())
    throw std::invalid_argument("eval: nothing to do; pass --ply/--ref or --checkpoint/--scene");
  std::cout << report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gaussian surfel reconstruction toolkit"};
  app.require_subcommand(1);

  SynthArgs sa;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic scene with ground truth");
  synth->add_option("--scene", sa.scene, "plane|sphere|cube|two_planes")
      ->required()
      ->check(CLI::IsMember({"plane", "sphere", "cube", "two_planes"}));
  synth->add_option("--out", sa.out, "output scene directory")->required();
  synth->add_option("--views", sa.views, "camera count")->check(CLI::PositiveNumber);
  synth->add_option("--width", sa.width)->check(CLI::PositiveNumber);
  synth->add_option("--height", sa.height)->check(CLI::PositiveNumber);
  synth->add_option("--radius", sa.radius, "camera ring radius");
  synth->add_option("--elevation", sa.elevation, "ring elevation in degrees");
  synth->add_option("--seed", sa.seed);
  synth->add_option("--gt-samples", sa.gt_samples, "ground-truth point count");

  TrainArgs ta;
  CLI::App* train_cmd = app.add_subcommand("train", "optimize surfels against a scene");
  train_cmd->add_option("--scene", ta.scene, "scene directory")->required();
  train_cmd->add_option("--out", ta.out, "output directory")->required();
  train_cmd->add_option("--iters", ta.iters)->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", ta.seed);
  train_cmd->add_option("--init-points", ta.init_points, "sparse ply to seed surfels");
  train_cmd->add_option("--init-count", ta.init_count, "random init size");
  train_cmd->add_option("--threads", ta.threads);
  train_cmd->add_option("--checkpoint-every", ta.checkpoint_every,
                        "snapshot cadence in iterations (aligned ones only)");
  train_cmd->add_option("--resume", ta.resume, "checkpoint to continue from");
  train_cmd->add_option("--densify-threshold", ta.densify_threshold,
                        "mean pixel-space gradient that triggers clone/split");
  train_cmd->add_flag("--no-consistency", ta.no_consistency, "drop the depth-normal term");
  train_cmd->add_flag("--no-prior", ta.no_prior, "drop the normal-prior term");
  train_cmd->add_flag("--no-opacity-loss", ta.no_opacity, "drop the binary-opacity term");
  train_cmd->add_flag("--no-mask-loss", ta.no_mask, "drop the silhouette term");

  RenderArgs ra;
  CLI::App* render_cmd = app.add_subcommand("render", "render checkpoint views to images");
  render_cmd->add_option("--checkpoint", ra.checkpoint)->required();
  render_cmd->add_option("--scene", ra.scene, "scene directory for cameras")->required();
  render_cmd->add_option("--out", ra.out, "output directory")->required();
  render_cmd->add_option("--view", ra.view, "single view index (default: all)");
  render_cmd->add_option("--threads", ra.threads);

  FuseArgs fa;
  CLI::App* fuse_cmd = app.add_subcommand("fuse", "extract an oriented point cloud");
  fuse_cmd->add_option("--checkpoint", fa.checkpoint)->required();
  fuse_cmd->add_option("--scene", fa.scene)->required();
  fuse_cmd->add_option("--out", fa.out, "output ply path");
  fuse_cmd->add_flag("--no-cut", fa.no_cut, "keep every back-projected point");
  fuse_cmd->add_option("--cut-mode", fa.cut_mode, "grid|median")
      ->check(CLI::IsMember({"grid", "median"}));
  fuse_cmd->add_option("--grid-res", fa.grid_res)->check(CLI::PositiveNumber);
  fuse_cmd->add_option("--lambda-cut", fa.lambda_cut, "occupancy threshold");
  fuse_cmd->add_option("--threads", fa.threads);

  EvalArgs ea;
  CLI::App* eval_cmd = app.add_subcommand("eval", "report chamfer and psnr metrics");
  eval_cmd->add_option("--ply", ea.ply, "candidate point cloud");
  eval_cmd->add_option("--ref", ea.ref, "reference point cloud");
  eval_cmd->add_option("--checkpoint", ea.checkpoint);
  eval_cmd->add_option("--scene", ea.scene);
  eval_cmd->add_option("--threads", ea.threads);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth) return run_synth(sa);
    if (*train_cmd) return run_train(ta);
    if (*render_cmd) return run_render(ra);
    if (*fuse_cmd) return run_fuse(fa);
    if (*eval_cmd) return run_eval(ea);
  } catch (const IoError& e) {
    std::cerr << "io error (" << kind_name(e.kind()) << "): " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid arguments: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  }
  return 0;
}
