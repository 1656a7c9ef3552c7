#include "mreg/spatial_index.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

namespace mreg {

namespace {

constexpr std::size_t kLeafSize = 12;

}  // namespace

SpatialIndex::SpatialIndex(std::span<const Vec3> points)
    : points_(points.begin(), points.end()), order_(points.size()) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, points_.size());
  }
}

std::size_t SpatialIndex::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{});
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all coincident

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t a, std::size_t b) {
                     return points_[a][axis] < points_[b][axis] ||
                            (points_[a][axis] == points_[b][axis] && a < b);
                   });
  const double split = points_[order_[mid]][axis];
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

// Left subtree holds coordinates <= split, right subtree >= split. A subtree is
// skipped only when its slab is strictly farther than the current bound, so
// equal-distance candidates are always examined for the index tie-break.
template <class Visit>
void SpatialIndex::descend(std::size_t node_id, const Vec3& q, Visit& visit) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      visit.offer(idx, (points_[idx] - q).squaredNorm());
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const std::size_t near = diff <= 0.0 ? node.left : node.right;
  const std::size_t far = diff <= 0.0 ? node.right : node.left;
  descend(near, q, visit);
  if (diff * diff <= visit.bound()) descend(far, q, visit);
}

namespace {

struct KnnVisitor {
  std::size_t k;
  std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(&neighbor_less)> heap{&neighbor_less};

  double bound() const {
    return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.top().dist2;
  }
  void offer(std::size_t idx, double d2) {
    const Neighbor n{idx, d2};
    if (heap.size() < k) {
      heap.push(n);
    } else if (neighbor_less(n, heap.top())) {
      heap.pop();
      heap.push(n);
    }
  }
};

struct RadiusVisitor {
  double r2;
  std::vector<Neighbor> out;

  double bound() const { return r2; }
  void offer(std::size_t idx, double d2) {
    if (d2 <= r2) out.push_back({idx, d2});
  }
};

}  // namespace

std::vector<Neighbor> SpatialIndex::knn(const Vec3& query, std::size_t k) const {
  if (k == 0 || points_.empty()) return {};
  KnnVisitor visitor{std::min(k, points_.size())};
  descend(0, query, visitor);
  std::vector<Neighbor> out;
  out.reserve(visitor.heap.size());
  while (!visitor.heap.empty()) {
    out.push_back(visitor.heap.top());
    visitor.heap.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<Neighbor> SpatialIndex::radius(const Vec3& query, double radius) const {
  if (points_.empty() || radius < 0.0) return {};
  RadiusVisitor visitor{radius * radius, {}};
  descend(0, query, visitor);
  std::sort(visitor.out.begin(), visitor.out.end(), neighbor_less);
  return std::move(visitor.out);
}

Neighbor SpatialIndex::nearest(const Vec3& query) const {
  if (points_.empty()) throw Error(ErrorCode::EmptyInput, "nearest-neighbor query on empty index");
  return knn(query, 1).front();
}

}  // namespace mreg
