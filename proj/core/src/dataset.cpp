#include "gsurf/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "gsurf/errors.hpp"
#include "gsurf/kdtree.hpp"
#include "gsurf/ply_io.hpp"
#include "gsurf/png_io.hpp"

namespace gsurf {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const json& require(const json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end())
    throw IoError(IoErrorKind::missing_field, path, std::string("missing field '") + key + "'");
  return *it;
}

double require_number(const json& j, const char* key, const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_number())
    throw IoError(IoErrorKind::malformed_json, path, std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

Vec3 require_vec3(const json& j, const char* key, const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() ||
      !v[2].is_number())
    throw IoError(IoErrorKind::malformed_json, path,
                  std::string("field '") + key + "' must be an array of 3 numbers");
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

Image to_rgb(Image img, const std::string& path) {
  if (img.channels == 3) return img;
  if (img.channels == 1) {
    Image out(img.height, img.width, 3);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x);
    return out;
  }
  throw IoError(IoErrorKind::bad_image, path, "expected a gray or rgb image");
}

void check_dims(const Image& img, const CameraView& cam, const std::string& path) {
  if (img.width != cam.width || img.height != cam.height)
    throw IoError(IoErrorKind::dimension_mismatch, path,
                  "raster is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                      " but the view declares " + std::to_string(cam.width) + "x" +
                      std::to_string(cam.height));
}

}  // namespace

SceneDataset load_scene(const std::string& dir) {
  const fs::path root(dir);
  const std::string meta_path = (root / "cameras.json").string();
  std::ifstream in(meta_path);
  if (!in) throw IoError(IoErrorKind::missing_file, meta_path, "cannot open");

  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(IoErrorKind::malformed_json, meta_path, e.what());
  }

  SceneDataset scene;
  const json& bbox = require(meta, "bbox", meta_path);
  scene.bbox.min = require_vec3(bbox, "min", meta_path);
  scene.bbox.max = require_vec3(bbox, "max", meta_path);
  if (!(scene.bbox.min.array() < scene.bbox.max.array()).all())
    throw IoError(IoErrorKind::malformed_json, meta_path, "bbox min must be below max");
  if (meta.contains("background")) scene.background = require_vec3(meta, "background", meta_path);
  if (meta.contains("scale_hint")) scene.scale_hint = require_number(meta, "scale_hint", meta_path);

  const json& views = require(meta, "views", meta_path);
  if (!views.is_array())
    throw IoError(IoErrorKind::malformed_json, meta_path, "'views' must be an array");
  if (views.empty()) throw IoError(IoErrorKind::empty_result, meta_path, "no views");

  for (const json& jv : views) {
    ViewData view;
    CameraView& cam = view.camera;
    cam.width = static_cast<int>(require_number(jv, "width", meta_path));
    cam.height = static_cast<int>(require_number(jv, "height", meta_path));
    cam.fx = require_number(jv, "fx", meta_path);
    cam.fy = require_number(jv, "fy", meta_path);
    cam.cx = require_number(jv, "cx", meta_path);
    cam.cy = require_number(jv, "cy", meta_path);
    if (cam.width <= 0 || cam.height <= 0 || cam.fx <= 0 || cam.fy <= 0)
      throw IoError(IoErrorKind::malformed_json, meta_path, "non-positive camera dimensions");

    const json& w2c = require(jv, "world_to_camera", meta_path);
    if (!w2c.is_array() || w2c.size() != 12)
      throw IoError(IoErrorKind::malformed_json, meta_path,
                    "'world_to_camera' must hold 12 row-major numbers");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) cam.rot(r, c) = w2c[r * 4 + c].get<double>();
      cam.trans[r] = w2c[r * 4 + 3].get<double>();
    }

    const json& jimg = require(jv, "image", meta_path);
    if (!jimg.is_string())
      throw IoError(IoErrorKind::malformed_json, meta_path, "'image' must be a path string");
    const std::string img_path = (root / jimg.get<std::string>()).string();
    view.name = fs::path(jimg.get<std::string>()).stem().string();
    view.image = to_rgb(read_png(img_path), img_path);
    check_dims(view.image, cam, img_path);

    view.mask = Bitmap(cam.height, cam.width, true);
    if (jv.contains("mask")) {
      const std::string mask_path = (root / jv["mask"].get<std::string>()).string();
      Image m = read_png(mask_path);
      check_dims(m, cam, mask_path);
      for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
          view.mask.at(y, x) = m.at(y, x, 0) >= 0.5 ? 1 : 0;
      view.has_mask = true;
    }

    if (jv.contains("normal")) {
      const std::string n_path = (root / jv["normal"].get<std::string>()).string();
      Image n = read_png(n_path);
      if (n.channels != 3)
        throw IoError(IoErrorKind::bad_image, n_path, "normal map must be rgb");
      check_dims(n, cam, n_path);
      const bool world_space = jv.contains("normal_space") && jv["normal_space"] == "world";
      view.prior_normal = Image(cam.height, cam.width, 3);
      for (int y = 0; y < n.height; ++y)
        for (int x = 0; x < n.width; ++x) {
          Vec3 d(2.0 * n.at(y, x, 0) - 1.0, 2.0 * n.at(y, x, 1) - 1.0,
                 2.0 * n.at(y, x, 2) - 1.0);
          if (world_space) d = cam.rot * d;
          // Near-zero pixels mean "no prior here"; everything else is
          // renormalized away from 8-bit quantization drift.
          const double len = d.norm();
          d = len >= 0.5 ? Vec3(d / len) : Vec3::Zero();
          for (int c = 0; c < 3; ++c) view.prior_normal.at(y, x, c) = d[c];
        }
      view.has_prior = true;
    }

    scene.views.push_back(std::move(view));
  }
  return scene;
}

void save_scene(const std::string& dir, const SceneDataset& scene) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  if (ec) throw IoError(IoErrorKind::write_failure, dir, "cannot create scene directory");

  json meta;
  meta["bbox"] = {{"min", {scene.bbox.min.x(), scene.bbox.min.y(), scene.bbox.min.z()}},
                  {"max", {scene.bbox.max.x(), scene.bbox.max.y(), scene.bbox.max.z()}}};
  meta["background"] = {scene.background.x(), scene.background.y(), scene.background.z()};
  meta["scale_hint"] = scene.scale_hint;
  meta["views"] = json::array();

  bool dirs_made = false;
  for (std::size_t i = 0; i < scene.views.size(); ++i) {
    const ViewData& view = scene.views[i];
    std::string name = view.name;
    if (name.empty()) {
      std::ostringstream os;
      os << "view_" << i;
      name = os.str();
    }
    const CameraView& cam = view.camera;

    json jv;
    jv["image"] = "images/" + name + ".png";
    jv["width"] = cam.width;
    jv["height"] = cam.height;
    jv["fx"] = cam.fx;
    jv["fy"] = cam.fy;
    jv["cx"] = cam.cx;
    jv["cy"] = cam.cy;
    json w2c = json::array();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) w2c.push_back(cam.rot(r, c));
      w2c.push_back(cam.trans[r]);
    }
    jv["world_to_camera"] = w2c;
    write_png_rgb8((root / jv["image"].get<std::string>()).string(), view.image);

    if (view.has_mask || view.has_prior) {
      if (!dirs_made) {
        fs::create_directories(root / "masks", ec);
        fs::create_directories(root / "normals", ec);
        dirs_made = true;
      }
    }
    if (view.has_mask) {
      jv["mask"] = "masks/" + name + ".png";
      Image m(cam.height, cam.width, 1);
      for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) m.at(y, x) = view.mask.at(y, x) ? 1.0 : 0.0;
      write_png_gray8((root / jv["mask"].get<std::string>()).string(), m);
    }
    if (view.has_prior) {
      jv["normal"] = "normals/" + name + ".png";
      jv["normal_space"] = "camera";
      Image n(cam.height, cam.width, 3);
      for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x)
          for (int c = 0; c < 3; ++c)
            n.at(y, x, c) = 0.5 * (view.prior_normal.at(y, x, c) + 1.0);
      write_png_rgb8((root / jv["normal"].get<std::string>()).string(), n);
    }
    meta["views"].push_back(std::move(jv));
  }

  std::ofstream out(root / "cameras.json");
  if (!out) throw IoError(IoErrorKind::write_failure, dir, "cannot write cameras.json");
  out << meta.dump(2) << "\n";
}

SurfelSet import_sparse_points(const std::string& path, std::uint64_t seed) {
  const OrientedPointCloud cloud = read_ply(path);
  const std::size_t n = cloud.positions.size();
  if (n == 0) throw IoError(IoErrorKind::empty_result, path, "no points in ply");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const bool with_colors = !cloud.colors.empty();
  const double op = logit(0.1);

  KdTree tree(cloud.positions);
  SurfelSet s;
  s.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Tangent extent from the local point spacing; lone points fall back to
    // a tenth of a unit.
    double spacing = 0.1;
    if (n > 1) {
      const auto hit = tree.nearest(cloud.positions[i], static_cast<int>(i));
      spacing = std::sqrt(hit.dist2);
    }
    spacing = std::max(spacing, 1e-6);
    const double log_s = std::log(spacing);

    Vec4 q;
    do {
      q = Vec4(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    } while (q.norm() < 1e-6);
    q.normalize();

    ShCoeffs sh{};
    if (with_colors)
      for (int c = 0; c < 3; ++c) sh[c] = (cloud.colors[i][c] - 0.5) / kSh0;

    s.push_back(cloud.positions[i], q, Vec2(log_s, log_s), op, sh);
  }
  return s;
}

}  // namespace gsurf
