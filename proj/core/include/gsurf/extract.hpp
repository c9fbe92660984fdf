#pragma once

#include <vector>

#include "gsurf/camera.hpp"
#include "gsurf/image.hpp"
#include "gsurf/render.hpp"
#include "gsurf/surfel.hpp"

namespace gsurf {

// Accumulated weighted opacity per voxel; float cells keep the default
// 512-per-axis grid at half a gigabyte.
struct OccupancyGrid {
  Aabb bbox;
  int resolution = 512;
  std::vector<float> values;  // index (z * res + y) * res + x

  float at(int ix, int iy, int iz) const {
    return values[(static_cast<std::size_t>(iz) * resolution + iy) * resolution + ix];
  }
  Vec3 voxel_size() const {
    return bbox.extent() / static_cast<double>(resolution);
  }
  Vec3 voxel_center(int ix, int iy, int iz) const {
    Vec3 vs = voxel_size();
    return bbox.min + Vec3((ix + 0.5) * vs.x(), (iy + 0.5) * vs.y(),
                           (iz + 0.5) * vs.z());
  }
  // -1 when the point is outside the box; boundary points clamp inward.
  int voxel_index(const Vec3& p) const;
};

struct OrientedPointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> normals;  // unit
  std::vector<Vec3> colors;   // empty, or one RGB in [0,1] per point
};

// Adds evaluate_kernel(voxel center) * opacity for every voxel whose center
// falls within 3 * max(scale) of the surfel center laterally and within half
// a voxel diagonal plus one voxel along the normal. Workers own disjoint
// z-slabs and visit surfels in index order, so the sums are bitwise
// reproducible for any worker count.
OccupancyGrid accumulate_grid(const SurfelSet& surfels, const Aabb& bbox,
                              int resolution, int threads = 0);

// Keeps points whose containing voxel accumulated at least lambda; points
// outside the grid box are dropped.
OrientedPointCloud cut_points(const OrientedPointCloud& points,
                              const OccupancyGrid& grid, double lambda);

struct FusedView {
  const RenderTarget* target = nullptr;
  const CameraView* camera = nullptr;
  const Bitmap* mask = nullptr;  // optional additional keep-mask
};

struct FuseOptions {
  // Back-project the per-pixel weighted median depth instead of the blended
  // mean; the outlier-removal baseline the volumetric cut is compared with.
  bool use_median_depth = false;
  bool attach_colors = true;
  double lambda = 1.0;
};

// Back-projects every coverage-valid, mask-positive pixel of every view into
// a world point with its renormalized world-space normal, then applies the
// volumetric cut when a grid is given. Throws IoError(empty_result) when
// nothing survives.
OrientedPointCloud fuse_views(const std::vector<FusedView>& views,
                              const OccupancyGrid* grid,
                              const FuseOptions& opt = {});

// 0.5 * (mean nearest-neighbor distance a->b + b->a), exact neighbors.
double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b,
                        int threads = 0);

}  // namespace gsurf
