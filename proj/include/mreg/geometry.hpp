#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "mreg/error.hpp"

namespace mreg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Coordinate frames: HMD world, depth sensor, resection bed, specimen scan, tool.
enum class FrameId : std::uint8_t { World, Depth, Bed, Specimen, Tool };

const char* to_string(FrameId frame);
FrameId frame_from_string(std::string_view name);

// Element of SE(3) mapping points expressed in `source` into `target`.
// 
// The rotation is kept as an explicit orthonormal matrix. Construction from a
// matrix whose orthonormality drift exceeds 1e-9 projects it back onto SO(3)
// (polar decomposition); drift beyond 1e-6 is rejected as InvalidParams.
class RigidTransform {
 public:
  RigidTransform(const Mat3& rotation, const Vec3& translation, FrameId source, FrameId target);

  static RigidTransform identity(FrameId source, FrameId target);
  static RigidTransform translation_only(const Vec3& t, FrameId source, FrameId target);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  FrameId source() const { return source_; }
  FrameId target() const { return target_; }

  RigidTransform retagged(FrameId source, FrameId target) const;
  Eigen::Matrix4d matrix() const;

  // Maps x (expressed in x_frame) into target(). Throws FrameMismatch.
  Vec3 apply(const Vec3& x, FrameId x_frame) const;
  // Frame-unchecked variants for inner loops over a cloud already known to be in source().
  Vec3 operator*(const Vec3& x) const { return rotation_ * x + translation_; }
  Vec3 rotate(const Vec3& v) const { return rotation_ * v; }

 private:
  Mat3 rotation_;
  Vec3 translation_;
  FrameId source_;
  FrameId target_;
};

// a ∘ b: maps b.source → a.target. Requires a.source == b.target.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& t);

// W←S = W←D · D←R · R←S
RigidTransform chain_world_from_specimen(const RigidTransform& t_wd, const RigidTransform& t_dr,
                                         const RigidTransform& t_rs);
// W←T = W←D · D←T
RigidTransform chain_tool_in_world(const RigidTransform& t_wd, const RigidTransform& t_dt);

double orthonormality_drift(const Mat3& r);
Mat3 nearest_rotation(const Mat3& m);
Mat3 axis_angle(const Vec3& axis, double radians);
// Geodesic distance on SO(3), degrees.
double rotation_error_deg(const Mat3& a, const Mat3& b);

struct PointCloud {
  std::vector<Vec3> points;               // mm
  std::optional<std::vector<Vec3>> normals;
  std::optional<std::vector<double>> curvatures;
  FrameId frame = FrameId::Bed;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return normals.has_value(); }
  bool has_curvatures() const { return curvatures.has_value(); }

  // Throws InvalidParams if attribute lengths or normal norms are off.
  void validate() const;
};

PointCloud select(const PointCloud& cloud, std::span<const std::size_t> indices);
// Points and normals are mapped; the cloud must be in t.source().
PointCloud transformed(const PointCloud& cloud, const RigidTransform& t);

struct Aabb {
  Vec3 min;
  Vec3 max;

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

Aabb aabb_of(std::span<const Vec3> points);
Aabb dilate(const Aabb& box, double margin);

enum class NormalStatus : std::uint8_t {
  Ok,
  Degenerate,    // collinear neighborhood, normal direction ambiguous
  Insufficient,  // fewer than 3 neighbors; normal set to the viewpoint direction
};

PointCloud estimate_normals(const PointCloud& cloud, double radius, const Vec3& viewpoint,
                            std::vector<NormalStatus>* status = nullptr);

// Voxels holding fewer than min_points input points are dropped.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel, std::size_t min_points = 1);

inline constexpr std::size_t kDefaultOutlierK = 20;
inline constexpr double kDefaultOutlierStdRatio = 2.0;

PointCloud remove_statistical_outliers(const PointCloud& cloud, std::size_t k = kDefaultOutlierK,
                                       double std_ratio = kDefaultOutlierStdRatio);

}  // namespace mreg
