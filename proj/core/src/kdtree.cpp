#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "gsurf/kdtree.hpp"

namespace gsurf {

KdTree::KdTree(std::vector<Vec3> points) : pts_(std::move(points)) {
  original_.resize(pts_.size());
  std::iota(original_.begin(), original_.end(), 0);
  if (!pts_.empty()) root_ = build(0, static_cast<int>(pts_.size()));
}

int KdTree::build(int begin, int end) {
  Node node;
  node.begin = begin;
  node.end = end;
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(node);

  if (end - begin <= kLeafSize) return id;

  Vec3 lo = pts_[begin], hi = pts_[begin];
  for (int i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(pts_[i]);
    hi = hi.cwiseMax(pts_[i]);
  }
  int axis = 0;
  Vec3 ext = hi - lo;
  if (ext.y() > ext.x()) axis = 1;
  if (ext.z() > ext[axis]) axis = 2;
  if (ext[axis] <= 0.0) return id;  // all points coincide: keep as leaf

  const int mid = begin + (end - begin) / 2;
  // Keep pts_ and original_ in lockstep while partitioning.
  std::vector<int> order(end - begin);
  std::iota(order.begin(), order.end(), begin);
  std::nth_element(order.begin(), order.begin() + (mid - begin), order.end(),
                   [&](int a, int b) { return pts_[a][axis] < pts_[b][axis]; });
  std::vector<Vec3> tmp_p(order.size());
  std::vector<int> tmp_i(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    tmp_p[k] = pts_[order[k]];
    tmp_i[k] = original_[order[k]];
  }
  std::copy(tmp_p.begin(), tmp_p.end(), pts_.begin() + begin);
  std::copy(tmp_i.begin(), tmp_i.end(), original_.begin() + begin);

  nodes_[id].axis = axis;
  nodes_[id].split = pts_[mid][axis];
  const int left = build(begin, mid);
  nodes_[id].left = left;
  const int right = build(mid, end);
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int node, const Vec3& q, int exclude, Hit& best) const {
  const Node& n = nodes_[node];
  if (n.axis < 0) {
    for (int i = n.begin; i < n.end; ++i) {
      if (original_[i] == exclude) continue;
      double d2 = (pts_[i] - q).squaredNorm();
      if (d2 < best.dist2) {
        best.dist2 = d2;
        best.index = original_[i];
      }
    }
    return;
  }
  const double delta = q[n.axis] - n.split;
  const int near = delta < 0 ? n.left : n.right;
  const int far = delta < 0 ? n.right : n.left;
  search(near, q, exclude, best);
  if (delta * delta < best.dist2) search(far, q, exclude, best);
}

KdTree::Hit KdTree::nearest(const Vec3& query, int exclude) const {
  if (pts_.empty()) throw std::invalid_argument("KdTree::nearest: empty tree");
  Hit best;
  best.dist2 = std::numeric_limits<double>::infinity();
  search(root_, query, exclude, best);
  return best;
}

}  // namespace gsurf
