#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "mreg/coarse.hpp"
#include "mreg/features.hpp"
#include "mreg/geometry.hpp"
#include "mreg/spatial_index.hpp"

namespace mreg {

struct RoiParams {
  double margin = 5.0;  // mm, dilation of the specimen bounding box
  void validate() const;
};

struct IcpParams {
  std::size_t max_iters = 50;
  double max_corr_dist = 2.5;     // mm
  double normal_angle_max = 60.0; // degrees
  double huber_delta = 1.0;       // mm
  double rel_change_tol = 1e-6;   // on the inlier plane-residual RMSE

  static IcpParams for_voxel(double voxel);  // max_corr_dist = 2.5 v
  void validate() const;
};

// Bed points inside Dilate(AABB(t_coarse · spec), margin), order and attributes kept.
PointCloud build_auto_roi(const PointCloud& bed, const PointCloud& spec, const RigidTransform& t_coarse,
                          const RoiParams& roi, Aabb* box = nullptr);

// One frozen set of point-to-plane correspondences at a given pose.
struct PlaneCorrespondences {
  std::vector<std::size_t> spec_index;
  std::vector<std::size_t> bed_index;
  std::vector<double> residual;  // (T q - p) · n_p
  std::vector<double> weight;    // Huber
  std::size_t rejected = 0;

  std::size_t size() const { return spec_index.size(); }
  double rmse() const;
};

PlaneCorrespondences find_plane_correspondences(const PointCloud& bed_roi, const SpatialIndex& bed_index,
                                                const PointCloud& spec, const RigidTransform& t,
                                                const IcpParams& params);

using Vector6d = Eigen::Matrix<double, 6, 1>;

// Small-angle Gauss-Newton step about the centroid of the matched specimen points.
struct PlaneStep {
  Vector6d delta = Vector6d::Zero();  // (omega, translation)
  Vec3 pivot = Vec3::Zero();
  double cost_before = 0.0;           // Σ w r²
  double cost_after = 0.0;            // Σ w (r + J delta)², linearized
};

PlaneStep solve_plane_step(const PointCloud& bed_roi, const PointCloud& spec, const RigidTransform& t,
                           const PlaneCorrespondences& corr);
RigidTransform apply_step(const RigidTransform& t, const PlaneStep& step);

struct IcpTrace {
  std::vector<double> rmse;  // per iteration, before the step
  std::vector<PlaneStep> steps;
};

RegistrationResult icp_point_to_plane(const PointCloud& bed_roi, const PointCloud& spec,
                                      const RigidTransform& t_init, const IcpParams& params,
                                      IcpTrace* trace = nullptr);

struct RegistrationParams {
  double voxel = 1.0;  // mm; preprocessing grid and the scale for derived defaults
  bool downsample = true;
  Vec3 bed_viewpoint = Vec3(0.0, 0.0, 1000.0);
  Vec3 spec_viewpoint = Vec3(0.0, 0.0, 1000.0);
  FeatureParams features;
  CoarseParams coarse;
  RoiParams roi;
  IcpParams icp;

  static RegistrationParams for_voxel(double voxel);
};

struct RegistrationOutput {
  RegistrationResult coarse;
  RegistrationResult fine;
  CoarseDiagnostics coarse_diagnostics;
  std::size_t roi_points = 0;
  Aabb roi_box;

  const RigidTransform& transform() const { return fine.transform; }
};

// Full coarse -> auto-ROI -> ICP pipeline. Normals are estimated when absent.
RegistrationOutput register_clouds(const PointCloud& bed, const PointCloud& spec,
                                   const RegistrationParams& params, std::uint64_t seed);

}  // namespace mreg
