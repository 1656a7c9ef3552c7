#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mreg/geometry.hpp"

namespace mreg {

struct Neighbor {
  std::size_t index;
  double dist2;
};

// Lexicographic (squared distance, index) order used for every neighbor list.
inline bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
}

// Static kd-tree over a point list.
// 
// Results are exactly the brute-force neighbor sets, sorted by ascending
// squared distance with ties broken by ascending point index.
class SpatialIndex {
 public:
  explicit SpatialIndex(std::span<const Vec3> points);

  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const;
  // All points with squared distance <= radius².
  std::vector<Neighbor> radius(const Vec3& query, double radius) const;
  Neighbor nearest(const Vec3& query) const;

 private:
  struct Node {
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t left = 0;
    std::size_t right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  template <class Visit>
  void descend(std::size_t node, const Vec3& q, Visit& visit) const;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace mreg
