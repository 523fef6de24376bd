#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <queue>
#include <span>
#include <utility>
#include <vector>

namespace dgm {

// Static k-d tree over a fixed point array. Queries return neighbors ordered
// by (squared distance, index) so results never depend on tie order.
template <int Dim>
class KdTree {
public:
  using Point = Eigen::Matrix<double, Dim, 1>;

  struct Neighbor {
    std::int32_t index;
    double dist2;
    bool operator<(const Neighbor &o) const {
      return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
    }
  };

  KdTree() = default;
  explicit KdTree(std::vector<Point> points) : points_(std::move(points)) { build(); }

  std::size_t size() const { return points_.size(); }
  const Point &point(std::size_t i) const { return points_[i]; }

  // Up to k nearest points; `exclude` (if >= 0) is skipped, which is how
  // self-matches are dropped for in-set neighborhoods.
  std::vector<Neighbor> knn(const Point &q, int k, std::int32_t exclude = -1) const {
    std::vector<Neighbor> heap;
    if (k <= 0 || points_.empty()) return heap;
    heap.reserve(k + 1);
    if (!nodes_.empty()) search(0, q, k, exclude, heap);
    std::sort_heap(heap.begin(), heap.end());
    return heap;
  }

  Neighbor nearest(const Point &q, std::int32_t exclude = -1) const {
    auto r = knn(q, 1, exclude);
    return r.empty() ? Neighbor{-1, 0.0} : r.front();
  }

private:
  struct Node {
    std::int32_t begin, end;  // range in order_
    std::int32_t left = -1, right = -1;
    int axis = 0;
    double split = 0.0;
    Point lo, hi;  // bounding box
  };
  static constexpr int kLeaf = 12;

  void build() {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.clear();
    if (!points_.empty()) build_node(0, static_cast<std::int32_t>(points_.size()));
  }

  std::int32_t build_node(std::int32_t begin, std::int32_t end) {
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo = points_[order_[begin]];
    node.hi = node.lo;
    for (std::int32_t i = begin + 1; i < end; ++i) {
      node.lo = node.lo.cwiseMin(points_[order_[i]]);
      node.hi = node.hi.cwiseMax(points_[order_[i]]);
    }
    const std::int32_t id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeaf) return id;
    int axis;
    (node.hi - node.lo).maxCoeff(&axis);
    const std::int32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::int32_t a, std::int32_t b) {
                       const double va = points_[a][axis], vb = points_[b][axis];
                       return va < vb || (va == vb && a < b);
                     });
    const double split = points_[order_[mid]][axis];
    const std::int32_t l = build_node(begin, mid);
    const std::int32_t r = build_node(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  static double box_dist2(const Node &n, const Point &q) {
    double d2 = 0.0;
    for (int a = 0; a < Dim; ++a) {
      const double v = q[a] < n.lo[a] ? n.lo[a] - q[a] : (q[a] > n.hi[a] ? q[a] - n.hi[a] : 0.0);
      d2 += v * v;
    }
    return d2;
  }

  void search(std::int32_t id, const Point &q, int k, std::int32_t exclude,
              std::vector<Neighbor> &heap) const {
    const Node &n = nodes_[id];
    if (static_cast<int>(heap.size()) == k && box_dist2(n, q) > heap.front().dist2) return;
    if (n.left < 0) {
      for (std::int32_t i = n.begin; i < n.end; ++i) {
        const std::int32_t idx = order_[i];
        if (idx == exclude) continue;
        const Neighbor cand{idx, (points_[idx] - q).squaredNorm()};
        if (static_cast<int>(heap.size()) < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const bool go_left = q[n.axis] < n.split;
    search(go_left ? n.left : n.right, q, k, exclude, heap);
    search(go_left ? n.right : n.left, q, k, exclude, heap);
  }

  std::vector<Point> points_;
  std::vector<std::int32_t> order_;
  std::vector<Node> nodes_;
};

using KdTree2 = KdTree<2>;
using KdTree3 = KdTree<3>;

}  // namespace dgm
