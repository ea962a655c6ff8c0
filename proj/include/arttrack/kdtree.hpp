#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "arttrack/se3.hpp"

namespace arttrack {

// Static 3-d tree over a borrowed point array. The tree stores indices only;
// the caller keeps the points alive and unchanged for the tree's lifetime.
class KdTree {
 public:
  struct Hit {
    std::size_t index = 0;
    double dist2 = std::numeric_limits<double>::infinity();
  };

  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points) : points_(points) {
    order_.resize(points.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(points.size() / kLeafSize * 2 + 2);
    if (!points.empty()) build(0, points.size(), 0);
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  Hit nearest(const Vec3& q) const {
    Hit best;
    if (!nodes_.empty()) search_nearest(0, q, best);
    return best;
  }

  // k nearest neighbours sorted by increasing distance.
  std::vector<Hit> knn(const Vec3& q, std::size_t k) const {
    std::vector<Hit> heap;  // max-heap on dist2
    if (k == 0 || nodes_.empty()) return heap;
    heap.reserve(k + 1);
    search_knn(0, q, k, heap);
    std::sort_heap(heap.begin(), heap.end(), cmp);
    return heap;
  }

 private:
  static constexpr std::size_t kLeafSize = 8;

  struct Node {
    std::size_t begin, end;
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  static bool cmp(const Hit& a, const Hit& b) {
    return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
  }

  std::size_t build(std::size_t begin, std::size_t end, int depth) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return id;

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    const double split = points_[order_[mid]][axis];
    const std::size_t left = build(begin, mid, depth + 1);
    const std::size_t right = build(mid, end, depth + 1);
    Node& n = nodes_[id];
    n.axis = axis;
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
  }

  void search_nearest(std::size_t id, const Vec3& q, Hit& best) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        const Hit h{idx, (points_[idx] - q).squaredNorm()};
        if (cmp(h, best)) best = h;
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const std::size_t near = diff < 0.0 ? n.left : n.right;
    const std::size_t far = diff < 0.0 ? n.right : n.left;
    search_nearest(near, q, best);
    if (diff * diff <= best.dist2) search_nearest(far, q, best);
  }

  void search_knn(std::size_t id, const Vec3& q, std::size_t k, std::vector<Hit>& heap) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        const Hit h{idx, (points_[idx] - q).squaredNorm()};
        if (heap.size() < k) {
          heap.push_back(h);
          std::push_heap(heap.begin(), heap.end(), cmp);
        } else if (cmp(h, heap.front())) {
          std::pop_heap(heap.begin(), heap.end(), cmp);
          heap.back() = h;
          std::push_heap(heap.begin(), heap.end(), cmp);
        }
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const std::size_t near = diff < 0.0 ? n.left : n.right;
    const std::size_t far = diff < 0.0 ? n.right : n.left;
    search_knn(near, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.front().dist2) search_knn(far, q, k, heap);
  }

  std::span<const Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace arttrack
