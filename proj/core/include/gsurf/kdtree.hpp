#pragma once

#include <vector>

#include "gsurf/math.hpp"

namespace gsurf {

// Static median-split k-d tree for exact nearest-neighbor queries.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);

  struct Hit {
    double dist2 = 0.0;
    int index = -1;  // into the constructor's point order
  };
  // `exclude` skips one original index (self-queries on the tree's own points).
  Hit nearest(const Vec3& query, int exclude = -1) const;

  std::size_t size() const { return pts_.size(); }

 private:
  struct Node {
    int axis = -1;          // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf payload range in pts_
  };
  static constexpr int kLeafSize = 16;

  int build(int begin, int end);
  void search(int node, const Vec3& q, int exclude, Hit& best) const;

  std::vector<Vec3> pts_;       // reordered during build
  std::vector<int> original_;   // pts_[i] was points[original_[i]]
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace gsurf
