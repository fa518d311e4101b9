#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <span>
#include <vector>

#include "rupi/error.hpp"

namespace rupi {

/// A neighbour returned by a k-NN query: row index and squared distance.
struct Neighbor {
  std::size_t index;
  double dist2;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
  }
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Squared Euclidean distance, summed in dimension order. The tree and any
/// brute-force comparison must use the same summation order for exact ties.
template <typename Scalar>
double squared_distance(std::span<const Scalar> a, std::span<const Scalar> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

/// Static exact k-d tree over the rows of a dense point set.
///
/// Nodes split at the median of the widest dimension and keep their bounding
/// box, which gives an exact lower bound for pruning. Results are ordered by
/// (distance, row index), so equidistant points resolve to the lowest index,
/// identically to a sorted brute-force scan.
template <typename Scalar = double>
class KdTree {
 public:
  static constexpr std::size_t kLeafSize = 12;

  KdTree() = default;

  /// `points` holds n rows of `dim` values, row-major.
  KdTree(std::vector<Scalar> points, std::size_t dim) : points_(std::move(points)), dim_(dim) {
    if (dim_ == 0) throw DataError("k-d tree: dimension must be positive");
    if (points_.size() % dim_ != 0) throw DataError("k-d tree: ragged point buffer");
    n_ = points_.size() / dim_;
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (n_ > 0) build(0, n_);
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t dim() const noexcept { return dim_; }

  std::span<const Scalar> point(std::size_t i) const {
    return {points_.data() + i * dim_, dim_};
  }

  /// The k nearest rows to `query`, nearest first.
  std::vector<Neighbor> knn(std::span<const Scalar> query, std::size_t k) const {
    if (query.size() != dim_)
      throw DataError("k-d tree: query has dimension " + std::to_string(query.size()) +
                      ", tree has " + std::to_string(dim_));
    k = std::min(k, n_);
    std::vector<Neighbor> heap;
    if (k == 0) return heap;
    heap.reserve(k + 1);
    search(0, query, k, heap);
    std::sort_heap(heap.begin(), heap.end());
    return heap;
  }

 private:
  struct Node {
    std::size_t begin, end;
    std::size_t left = 0, right = 0;  // 0 marks a leaf; the root is never a child
    std::vector<Scalar> lo, hi;
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end, 0, 0, std::vector<Scalar>(dim_), std::vector<Scalar>(dim_)});
    {
      Node& node = nodes_[id];
      for (std::size_t d = 0; d < dim_; ++d) {
        node.lo[d] = node.hi[d] = coord(order_[begin], d);
        for (std::size_t i = begin + 1; i < end; ++i) {
          const Scalar v = coord(order_[i], d);
          node.lo[d] = std::min(node.lo[d], v);
          node.hi[d] = std::max(node.hi[d], v);
        }
      }
    }
    if (end - begin <= kLeafSize) return id;

    std::size_t axis = 0;
    Scalar best = -1;
    for (std::size_t d = 0; d < dim_; ++d) {
      const Scalar spread = nodes_[id].hi[d] - nodes_[id].lo[d];
      if (spread > best) {
        best = spread;
        axis = d;
      }
    }
    if (best <= 0) return id;  // all points identical

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       const Scalar va = coord(a, axis), vb = coord(b, axis);
                       return va < vb || (va == vb && a < b);
                     });
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  Scalar coord(std::size_t row, std::size_t d) const { return points_[row * dim_ + d]; }

  double box_distance(const Node& node, std::span<const Scalar> q) const {
    double s = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      double diff = 0.0;
      if (q[d] < node.lo[d])
        diff = static_cast<double>(q[d]) - node.lo[d];
      else if (q[d] > node.hi[d])
        diff = static_cast<double>(q[d]) - node.hi[d];
      s += diff * diff;
    }
    return s;
  }

  void offer(std::vector<Neighbor>& heap, std::size_t k, Neighbor cand) const {
    if (heap.size() < k) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end());
    } else if (cand < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end());
    }
  }

  void search(std::size_t id, std::span<const Scalar> q, std::size_t k,
              std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[id];
    if (heap.size() == k && box_distance(node, q) > heap.front().dist2) return;
    if (node.left == 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t row = order_[i];
        offer(heap, k, {row, squared_distance<Scalar>(q, point(row))});
      }
      return;
    }
    const double dl = box_distance(nodes_[node.left], q);
    const double dr = box_distance(nodes_[node.right], q);
    if (dl <= dr) {
      search(node.left, q, k, heap);
      search(node.right, q, k, heap);
    } else {
      search(node.right, q, k, heap);
      search(node.left, q, k, heap);
    }
  }

  std::vector<Scalar> points_;
  std::size_t dim_ = 0;
  std::size_t n_ = 0;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace rupi
