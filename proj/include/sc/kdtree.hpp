#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sc/error.hpp"

namespace sc {

/// Static k-d tree over fixed-dimension points with exact k-NN search.
/// Rebuilt from scratch (no incremental insertion); see PlaceDatabase for the
/// count-based rebuild policy layered on top.
///
/// Results are the k smallest by (squared distance, index) lexicographically,
/// independent of traversal order, so ties are deterministic.
class KdTree {
 public:
  struct Neighbor {
    std::size_t index = 0;  // position in the vector passed to the constructor
    double dist_sq = 0.0;
  };

  KdTree() = default;

  explicit KdTree(std::vector<Eigen::VectorXd> points) : points_(std::move(points)) {
    const std::size_t n = points_.size();
    if (n == 0) return;
    dim_ = points_[0].size();
    if (dim_ == 0) throw InvalidParam("k-d tree points must have dimension >= 1");
    for (const auto& p : points_)
      if (p.size() != dim_)
        throw ShapeError("k-d tree points must share one dimension");
    order_.resize(n);
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    nodes_.reserve(2 * n / kLeafSize + 2);
    build(0, n);
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Eigen::VectorXd& point(std::size_t i) const { return points_[i]; }

  /// k nearest accepted points, ascending by (squared distance, index).
  /// `accept(index)` filters candidates during the search, so exclusions do
  /// not eat into k. Fewer than k results when the tree holds fewer accepted
  /// points.
  template <class Accept>
  std::vector<Neighbor> knn(const Eigen::VectorXd& query, std::size_t k,
                            Accept&& accept) const {
    if (k == 0 || points_.empty()) return {};
    if (query.size() != dim_)
      throw ShapeError("query dimension " + std::to_string(query.size()) +
                       " does not match tree dimension " + std::to_string(dim_));
    Heap heap;
    search(0, query, k, accept, heap);
    std::vector<Neighbor> out(heap.size());
    for (std::size_t i = heap.size(); i-- > 0;) {
      out[i] = heap.top();
      heap.pop();
    }
    return out;
  }

  std::vector<Neighbor> knn(const Eigen::VectorXd& query, std::size_t k) const {
    return knn(query, k, [](std::size_t) { return true; });
  }

 private:
  static constexpr std::size_t kLeafSize = 8;

  struct Node {
    int left = -1;   // -1 marks a leaf
    int right = -1;
    int split_dim = 0;
    double split_val = 0.0;
    std::size_t begin = 0;  // leaf range in order_
    std::size_t end = 0;
  };

  struct WorseFirst {
    bool operator()(const Neighbor& a, const Neighbor& b) const {
      if (a.dist_sq != b.dist_sq) return a.dist_sq < b.dist_sq;
      return a.index < b.index;
    }
  };
  using Heap = std::priority_queue<Neighbor, std::vector<Neighbor>, WorseFirst>;

  int build(std::size_t begin, std::size_t end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    if (end - begin <= kLeafSize) {
      nodes_[id].begin = begin;
      nodes_[id].end = end;
      return id;
    }
    // Split the widest dimension at its median; (value, index) ordering makes
    // the median element unique. Spread is estimated on a capped stride
    // sample, which keeps rebuilds cheap without affecting search exactness.
    const std::size_t stride = std::max<std::size_t>(1, (end - begin) / 32);
    int dim = 0;
    double widest = -1.0;
    for (Eigen::Index d = 0; d < dim_; ++d) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t i = begin; i < end; i += stride) {
        const double v = points_[order_[i]][d];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > widest) {
        widest = hi - lo;
        dim = static_cast<int>(d);
      }
    }
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       const double va = points_[a][dim];
                       const double vb = points_[b][dim];
                       if (va != vb) return va < vb;
                       return a < b;
                     });
    const double split_val = points_[order_[mid]][dim];
    nodes_[id].split_dim = dim;
    nodes_[id].split_val = split_val;
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  template <class Accept>
  void search(int id, const Eigen::VectorXd& query, std::size_t k,
              Accept& accept, Heap& heap) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.left < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        if (!accept(idx)) continue;
        const double d = (points_[idx] - query).squaredNorm();
        const Neighbor cand{idx, d};
        if (heap.size() < k) {
          heap.push(cand);
        } else if (WorseFirst{}(cand, heap.top())) {
          heap.pop();
          heap.push(cand);
        }
      }
      return;
    }
    const double diff = query[node.split_dim] - node.split_val;
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    search(near, query, k, accept, heap);
    // Every far-side point is at least |diff| away along split_dim; visit on
    // equality so (distance, index) ties resolve identically to brute force.
    if (heap.size() < k || diff * diff <= heap.top().dist_sq)
      search(far, query, k, accept, heap);
  }

  std::vector<Eigen::VectorXd> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  Eigen::Index dim_ = 0;
};

}  // namespace sc
