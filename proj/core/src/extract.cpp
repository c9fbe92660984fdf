#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gsurf/errors.hpp"
#include "gsurf/extract.hpp"
#include "gsurf/kdtree.hpp"
#include "gsurf/parallel.hpp"

namespace gsurf {

int OccupancyGrid::voxel_index(const Vec3& p) const {
  if (!bbox.contains(p)) return -1;
  const Vec3 vs = voxel_size();
  int ix = std::min(resolution - 1,
                    static_cast<int>(std::floor((p.x() - bbox.min.x()) / vs.x())));
  int iy = std::min(resolution - 1,
                    static_cast<int>(std::floor((p.y() - bbox.min.y()) / vs.y())));
  int iz = std::min(resolution - 1,
                    static_cast<int>(std::floor((p.z() - bbox.min.z()) / vs.z())));
  return (iz * resolution + iy) * resolution + ix;
}

namespace {

struct VoxelBox {
  int lo[3], hi[3];  // inclusive center-index ranges, empty when lo > hi
};

// Index range of voxel centers inside [lo, hi] along each axis.
VoxelBox center_range(const Aabb& bbox, const Vec3& vs, int res, const Vec3& lo,
                      const Vec3& hi) {
  VoxelBox b{};
  for (int k = 0; k < 3; ++k) {
    double a = (lo[k] - bbox.min[k]) / vs[k] - 0.5;
    double c = (hi[k] - bbox.min[k]) / vs[k] - 0.5;
    b.lo[k] = std::max(0, static_cast<int>(std::ceil(a)));
    b.hi[k] = std::min(res - 1, static_cast<int>(std::floor(c)));
  }
  return b;
}

}  // namespace

OccupancyGrid accumulate_grid(const SurfelSet& surfels, const Aabb& bbox,
                              int resolution, int threads) {
  if (resolution < 8)
    throw std::invalid_argument("accumulate_grid: resolution must be >= 8");
  OccupancyGrid grid;
  grid.bbox = bbox;
  grid.resolution = resolution;
  grid.values.assign(static_cast<std::size_t>(resolution) * resolution * resolution,
                     0.0f);
  const Vec3 vs = grid.voxel_size();
  const double slab = 1.5 * vs.norm();  // half diagonal plus one voxel

  const std::size_t n = surfels.count();
  struct Visit {
    SurfelGeometry geom;
    Vec3 center;
    double opacity;
    double lateral;
    VoxelBox box;
  };
  std::vector<Visit> visits(n);
  for (std::size_t i = 0; i < n; ++i) {
    Visit& v = visits[i];
    v.geom = build_geometry(surfels, i);
    v.center = surfels.position[i];
    v.opacity = sigmoid(surfels.opacity_logit[i]);
    v.lateral = 3.0 * std::max(v.geom.scale.x(), v.geom.scale.y());
    Vec3 half;
    for (int k = 0; k < 3; ++k)
      half[k] = v.lateral * (std::abs(v.geom.rotation(k, 0)) +
                             std::abs(v.geom.rotation(k, 1))) +
                slab * std::abs(v.geom.rotation(k, 2));
    v.box = center_range(bbox, vs, resolution, v.center - half, v.center + half);
  }

  // Workers own disjoint z-slabs; every voxel sees its surfels in index
  // order, independent of the worker count.
  parallel_chunks(static_cast<std::size_t>(resolution), threads,
                  [&](std::size_t, std::size_t zb, std::size_t ze) {
    for (const Visit& v : visits) {
      int z0 = std::max(v.box.lo[2], static_cast<int>(zb));
      int z1 = std::min(v.box.hi[2], static_cast<int>(ze) - 1);
      if (z0 > z1 || v.box.lo[0] > v.box.hi[0] || v.box.lo[1] > v.box.hi[1])
        continue;
      for (int iz = z0; iz <= z1; ++iz) {
        for (int iy = v.box.lo[1]; iy <= v.box.hi[1]; ++iy) {
          for (int ix = v.box.lo[0]; ix <= v.box.hi[0]; ++ix) {
            Vec3 c = grid.voxel_center(ix, iy, iz);
            Vec3 d = c - v.center;
            if (std::abs(v.geom.normal.dot(d)) > slab) continue;
            double lx = v.geom.rotation.col(0).dot(d);
            double ly = v.geom.rotation.col(1).dot(d);
            if (lx * lx + ly * ly > v.lateral * v.lateral) continue;
            double w = evaluate_kernel(v.geom, v.center, c) * v.opacity;
            grid.values[(static_cast<std::size_t>(iz) * resolution + iy) *
                            resolution + ix] += static_cast<float>(w);
          }
        }
      }
    }
  });
  return grid;
}

OrientedPointCloud cut_points(const OrientedPointCloud& points,
                              const OccupancyGrid& grid, double lambda) {
  OrientedPointCloud out;
  const bool colors = !points.colors.empty();
  for (std::size_t i = 0; i < points.positions.size(); ++i) {
    int idx = grid.voxel_index(points.positions[i]);
    if (idx < 0 || grid.values[static_cast<std::size_t>(idx)] < lambda) continue;
    out.positions.push_back(points.positions[i]);
    out.normals.push_back(points.normals[i]);
    if (colors) out.colors.push_back(points.colors[i]);
  }
  return out;
}

OrientedPointCloud fuse_views(const std::vector<FusedView>& views,
                              const OccupancyGrid* grid,
                              const FuseOptions& opt) {
  OrientedPointCloud cloud;
  for (const FusedView& view : views) {
    if (!view.target || !view.camera)
      throw std::invalid_argument("fuse_views: missing target or camera");
    const RenderTarget& t = *view.target;
    const CameraView& cam = *view.camera;
    const Image& depth = opt.use_median_depth ? t.median_depth : t.depth;
    if (depth.empty())
      throw std::invalid_argument("fuse_views: requested depth map is empty");
    const Mat3 cam_to_world_rot = cam.rot.transpose();

    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        if (!t.coverage.at(y, x)) continue;
        if (view.mask && !view.mask->at(y, x)) continue;
        Vec3 nc(t.normal.at(y, x, 0), t.normal.at(y, x, 1), t.normal.at(y, x, 2));
        double len = nc.norm();
        if (len < 1e-12) continue;  // alpha-weighted normals cancelled out
        Vec3 pc = cam.pixel_ray(x + 0.5, y + 0.5) * depth.at(y, x);
        cloud.positions.push_back(cam.cam_to_world(pc));
        cloud.normals.push_back(cam_to_world_rot * (nc / len));
        if (opt.attach_colors)
          cloud.colors.push_back(Vec3(t.color.at(y, x, 0), t.color.at(y, x, 1),
                                      t.color.at(y, x, 2)));
      }
    }
  }
  if (grid) cloud = cut_points(cloud, *grid, opt.lambda);
  if (cloud.positions.empty())
    throw IoError(IoErrorKind::empty_result, "fuse_views",
                  "no points survived fusion");
  return cloud;
}

double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b,
                        int threads) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("chamfer_distance: empty point set");

  auto directed = [&](const std::vector<Vec3>& from, const KdTree& tree) {
    std::vector<double> partial(chunk_count_for(from.size()), 0.0);
    parallel_chunks(from.size(), threads,
                    [&](std::size_t chunk, std::size_t lo, std::size_t hi) {
      double s = 0;
      for (std::size_t i = lo; i < hi; ++i)
        s += std::sqrt(tree.nearest(from[i]).dist2);
      partial[chunk] = s;
    });
    double sum = 0;
    for (double p : partial) sum += p;
    return sum / static_cast<double>(from.size());
  };

  KdTree tree_a(a), tree_b(b);
  return 0.5 * (directed(a, tree_b) + directed(b, tree_a));
}

}  // namespace gsurf
