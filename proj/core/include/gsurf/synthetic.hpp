#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsurf/dataset.hpp"
#include "gsurf/extract.hpp"

namespace gsurf {

enum class SceneKind { plane, sphere, cube, two_planes };

// Accepts the lowercase kind names; throws std::invalid_argument otherwise.
SceneKind scene_kind_from_name(const std::string& name);

struct SyntheticSpec {
  SceneKind kind = SceneKind::sphere;
  int views = 24;
  int width = 128;
  int height = 128;
  double camera_radius = 3.0;
  // Ring latitude in degrees. Orbit scenes (sphere, cube) alternate views
  // between +elevation and -elevation; one-sided scenes (plane, two_planes)
  // stay on the +z side and alternate between elevation and elevation + 20.
  double elevation_deg = 30.0;
  std::uint64_t seed = 0;
  std::size_t gt_samples = 120000;
};

// Ray-traced ground truth: Lambertian procedural texture, analytic normals,
// exact depth, hit masks, plus surface samples filtered to points visible
// from at least one camera.
struct SyntheticScene {
  SceneDataset dataset;
  std::vector<Image> depth;  // per view, 1ch camera-space depth, 0 on miss
  OrientedPointCloud gt_points;
};

SyntheticScene synthesize(const SyntheticSpec& spec);

// save_scene plus gt_points.ply in the same directory.
void write_scene_with_gt(const std::string& dir, const SyntheticScene& scene);

}  // namespace gsurf
