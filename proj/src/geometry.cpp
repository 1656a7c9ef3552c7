#include "mreg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_map>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "mreg/spatial_index.hpp"

namespace mreg {

namespace {

constexpr double kDriftTolerance = 1e-9;
constexpr double kDriftReject = 1e-6;

void require_frame(FrameId expected, FrameId actual, const char* what) {
  if (expected != actual) {
    throw Error(ErrorCode::FrameMismatch, std::string(what) + ": expected frame " +
                                              to_string(expected) + ", got " + to_string(actual));
  }
}

}  // namespace

const char* to_string(FrameId frame) {
  switch (frame) {
    case FrameId::World: return "World";
    case FrameId::Depth: return "Depth";
    case FrameId::Bed: return "Bed";
    case FrameId::Specimen: return "Specimen";
    case FrameId::Tool: return "Tool";
  }
  return "?";
}

FrameId frame_from_string(std::string_view name) {
  for (FrameId f : {FrameId::World, FrameId::Depth, FrameId::Bed, FrameId::Specimen, FrameId::Tool}) {
    if (name == to_string(f)) return f;
  }
  throw Error(ErrorCode::Parse, "unknown frame tag '" + std::string(name) + "'");
}

double orthonormality_drift(const Mat3& r) {
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(r.determinant() - 1.0));
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

Mat3 axis_angle(const Vec3& axis, double radians) {
  return Eigen::AngleAxisd(radians, axis.normalized()).toRotationMatrix();
}

double rotation_error_deg(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation, FrameId source,
                               FrameId target)
    : rotation_(rotation), translation_(translation), source_(source), target_(target) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw Error(ErrorCode::InvalidParams, "rigid transform has non-finite entries");
  }
  const double drift = orthonormality_drift(rotation_);
  if (drift > kDriftReject) {
    throw Error(ErrorCode::InvalidParams,
                "rotation is not orthonormal (drift " + std::to_string(drift) + ")");
  }
  if (drift > kDriftTolerance) rotation_ = nearest_rotation(rotation_);
}

RigidTransform RigidTransform::identity(FrameId source, FrameId target) {
  return RigidTransform(Mat3::Identity(), Vec3::Zero(), source, target);
}

RigidTransform RigidTransform::translation_only(const Vec3& t, FrameId source, FrameId target) {
  return RigidTransform(Mat3::Identity(), t, source, target);
}

RigidTransform RigidTransform::retagged(FrameId source, FrameId target) const {
  return RigidTransform(rotation_, translation_, source, target);
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Vec3 RigidTransform::apply(const Vec3& x, FrameId x_frame) const {
  require_frame(source_, x_frame, "apply");
  return rotation_ * x + translation_;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  require_frame(a.source(), b.target(), "compose");
  return RigidTransform(a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation(),
                        b.source(), a.target());
}

RigidTransform invert(const RigidTransform& t) {
  const Mat3 rt = t.rotation().transpose();
  return RigidTransform(rt, -(rt * t.translation()), t.target(), t.source());
}

RigidTransform chain_world_from_specimen(const RigidTransform& t_wd, const RigidTransform& t_dr,
                                         const RigidTransform& t_rs) {
  require_frame(FrameId::World, t_wd.target(), "chain W<-D target");
  require_frame(FrameId::Depth, t_wd.source(), "chain W<-D source");
  require_frame(FrameId::Bed, t_dr.source(), "chain D<-R source");
  require_frame(FrameId::Specimen, t_rs.source(), "chain R<-S source");
  return compose(compose(t_wd, t_dr), t_rs);
}

RigidTransform chain_tool_in_world(const RigidTransform& t_wd, const RigidTransform& t_dt) {
  require_frame(FrameId::World, t_wd.target(), "chain W<-D target");
  require_frame(FrameId::Tool, t_dt.source(), "chain D<-T source");
  return compose(t_wd, t_dt);
}

void PointCloud::validate() const {
  if (normals) {
    if (normals->size() != points.size()) {
      throw Error(ErrorCode::InvalidParams, "normals length differs from points length");
    }
    for (const Vec3& n : *normals) {
      if (std::abs(n.norm() - 1.0) > 1e-6) {
        throw Error(ErrorCode::InvalidParams, "normal is not unit length");
      }
    }
  }
  if (curvatures) {
    if (curvatures->size() != points.size()) {
      throw Error(ErrorCode::InvalidParams, "curvatures length differs from points length");
    }
    for (double c : *curvatures) {
      if (!(c >= 0.0)) throw Error(ErrorCode::InvalidParams, "negative curvature score");
    }
  }
}

PointCloud select(const PointCloud& cloud, std::span<const std::size_t> indices) {
  PointCloud out;
  out.frame = cloud.frame;
  out.points.reserve(indices.size());
  for (std::size_t i : indices) out.points.push_back(cloud.points.at(i));
  if (cloud.normals) {
    out.normals.emplace();
    out.normals->reserve(indices.size());
    for (std::size_t i : indices) out.normals->push_back((*cloud.normals)[i]);
  }
  if (cloud.curvatures) {
    out.curvatures.emplace();
    out.curvatures->reserve(indices.size());
    for (std::size_t i : indices) out.curvatures->push_back((*cloud.curvatures)[i]);
  }
  return out;
}

PointCloud transformed(const PointCloud& cloud, const RigidTransform& t) {
  require_frame(t.source(), cloud.frame, "transform cloud");
  PointCloud out = cloud;
  out.frame = t.target();
  for (Vec3& p : out.points) p = t * p;
  if (out.normals) {
    for (Vec3& n : *out.normals) n = t.rotate(n);
  }
  return out;
}

Aabb aabb_of(std::span<const Vec3> points) {
  if (points.empty()) throw Error(ErrorCode::EmptyInput, "bounding box of empty point list");
  Aabb box{points.front(), points.front()};
  for (const Vec3& p : points) {
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  return box;
}

Aabb dilate(const Aabb& box, double margin) {
  if (!(margin >= 0.0)) throw Error(ErrorCode::InvalidParams, "dilation margin must be >= 0");
  const Vec3 m = Vec3::Constant(margin);
  return Aabb{box.min - m, box.max + m};
}

PointCloud estimate_normals(const PointCloud& cloud, double radius, const Vec3& viewpoint,
                            std::vector<NormalStatus>* status) {
  if (cloud.size() < 3) throw Error(ErrorCode::TooFewPoints, "normal estimation needs >= 3 points");
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidParams, "normal radius must be > 0");

  const SpatialIndex index(cloud.points);
  PointCloud out = cloud;
  out.normals.emplace(cloud.size());
  if (status) status->assign(cloud.size(), NormalStatus::Ok);

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    const Vec3 to_view = viewpoint - p;
    Vec3& n = (*out.normals)[i];
    const auto nbrs = index.radius(p, radius);
    if (nbrs.size() < 3) {
      n = to_view.norm() > 0.0 ? to_view.normalized() : Vec3::UnitZ();
      if (status) (*status)[i] = NormalStatus::Insufficient;
      continue;
    }
    Vec3 mean = Vec3::Zero();
    for (const Neighbor& nb : nbrs) mean += cloud.points[nb.index];
    mean /= static_cast<double>(nbrs.size());
    Mat3 cov = Mat3::Zero();
    for (const Neighbor& nb : nbrs) {
      const Vec3 d = cloud.points[nb.index] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    n = eig.eigenvectors().col(0).normalized();
    const Vec3 ev = eig.eigenvalues();
    if (status && ev[1] <= 1e-12 * std::max(ev[2], 1e-300)) (*status)[i] = NormalStatus::Degenerate;
    if (to_view.dot(n) < 0.0) n = -n;
  }
  return out;
}

namespace {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

}  // namespace

PointCloud voxel_downsample(const PointCloud& cloud, double voxel, std::size_t min_points) {
  if (!(voxel > 0.0)) throw Error(ErrorCode::InvalidParams, "voxel size must be > 0");
  if (min_points < 1) throw Error(ErrorCode::InvalidParams, "min_points must be >= 1");
  PointCloud out;
  out.frame = cloud.frame;
  if (cloud.empty()) return out;

  // Lattice anchored at the bounding-box min corner snapped down to a voxel multiple.
  const Aabb box = aabb_of(cloud.points);
  const Vec3 anchor = (box.min / voxel).array().floor() * voxel;

  std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> slot_of;
  slot_of.reserve(cloud.size());
  std::vector<Vec3> sum_p;
  std::vector<Vec3> sum_n;
  std::vector<double> sum_c;
  std::vector<std::size_t> count;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 cell = ((cloud.points[i] - anchor) / voxel).array().floor();
    const VoxelKey key{static_cast<std::int64_t>(cell.x()), static_cast<std::int64_t>(cell.y()),
                       static_cast<std::int64_t>(cell.z())};
    auto [it, inserted] = slot_of.try_emplace(key, sum_p.size());
    if (inserted) {
      sum_p.push_back(Vec3::Zero());
      sum_n.push_back(Vec3::Zero());
      sum_c.push_back(0.0);
      count.push_back(0);
    }
    const std::size_t s = it->second;
    sum_p[s] += cloud.points[i];
    if (cloud.normals) sum_n[s] += (*cloud.normals)[i];
    if (cloud.curvatures) sum_c[s] += (*cloud.curvatures)[i];
    ++count[s];
  }

  if (cloud.normals) out.normals.emplace();
  if (cloud.curvatures) out.curvatures.emplace();
  for (std::size_t s = 0; s < sum_p.size(); ++s) {
    if (count[s] < min_points) continue;
    const double c = static_cast<double>(count[s]);
    out.points.push_back(sum_p[s] / c);
    if (out.normals) {
      const double len = sum_n[s].norm();
      out.normals->push_back(len > 0.0 ? Vec3(sum_n[s] / len) : Vec3::UnitZ());
    }
    if (out.curvatures) out.curvatures->push_back(sum_c[s] / c);
  }
  return out;
}

PointCloud remove_statistical_outliers(const PointCloud& cloud, std::size_t k, double std_ratio) {
  if (k < 1) throw Error(ErrorCode::InvalidParams, "outlier k must be >= 1");
  if (!(std_ratio > 0.0)) throw Error(ErrorCode::InvalidParams, "outlier std_ratio must be > 0");
  if (cloud.size() <= k) {
    throw Error(ErrorCode::TooFewPoints, "outlier removal needs more than k points");
  }

  const SpatialIndex index(cloud.points);
  const std::size_t n = cloud.size();
  std::vector<double> mean_dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto nbrs = index.knn(cloud.points[i], k + 1);
    auto self = std::find_if(nbrs.begin(), nbrs.end(), [i](const Neighbor& nb) { return nb.index == i; });
    if (self != nbrs.end()) {
      nbrs.erase(self);
    } else {
      nbrs.pop_back();
    }
    double acc = 0.0;
    for (const Neighbor& nb : nbrs) acc += std::sqrt(nb.dist2);
    mean_dist[i] = acc / static_cast<double>(nbrs.size());
  }

  double mu = 0.0;
  for (double d : mean_dist) mu += d;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double d : mean_dist) var += (d - mu) * (d - mu);
  var /= static_cast<double>(n - 1);
  const double threshold = mu + std_ratio * std::sqrt(var);

  std::vector<std::size_t> keep;
  keep.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Relative slack absorbs rounding in mu when every statistic is identical.
    if (mean_dist[i] <= threshold * (1.0 + 1e-12)) keep.push_back(i);
  }
  return select(cloud, keep);
}

}  // namespace mreg
