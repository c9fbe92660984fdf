#pragma once

#include <string>
#include <vector>

#include "gsurf/camera.hpp"
#include "gsurf/image.hpp"
#include "gsurf/math.hpp"
#include "gsurf/surfel.hpp"

namespace gsurf {

struct ViewData {
  std::string name;  // stem used for per-view artifacts
  CameraView camera;
  Image image;         // 3ch, [0,1]
  Bitmap mask;         // all-ones when the scene declares none
  bool has_mask = false;
  Image prior_normal;  // 3ch camera-space unit vectors; empty when absent
  bool has_prior = false;
};

struct SceneDataset {
  std::vector<ViewData> views;
  Aabb bbox;
  Vec3 background = Vec3::Zero();
  double scale_hint = 1.0;
};

// Reads a scene directory: cameras.json plus the images it references.
// Throws IoError with the offending path on any malformed input.
SceneDataset load_scene(const std::string& dir);

// Writes cameras.json plus images/, masks/ and normals/ subdirectories.
// load_scene(save_scene(x)) reproduces cameras exactly and rasters to 8-bit
// quantization.
void save_scene(const std::string& dir, const SceneDataset& scene);

// One surfel per PLY point: scale from nearest-neighbor spacing, opacity 0.1,
// SH DC from the point color when present.
SurfelSet import_sparse_points(const std::string& path, std::uint64_t seed);

}  // namespace gsurf
