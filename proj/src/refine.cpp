#include "mreg/refine.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Geometry>
#include <Eigen/QR>

namespace mreg {

void RoiParams::validate() const {
  if (!(margin >= 0.0)) throw Error(ErrorCode::InvalidParams, "ROI margin must be >= 0");
}

IcpParams IcpParams::for_voxel(double voxel) {
  IcpParams p;
  p.max_corr_dist = 2.5 * voxel;
  return p;
}

void IcpParams::validate() const {
  if (max_iters == 0) throw Error(ErrorCode::InvalidParams, "ICP max_iters must be > 0");
  if (!(max_corr_dist > 0.0) || !(huber_delta > 0.0) || !(rel_change_tol > 0.0)) {
    throw Error(ErrorCode::InvalidParams, "ICP distances and tolerances must be > 0");
  }
  if (!(normal_angle_max > 0.0 && normal_angle_max <= 90.0)) {
    throw Error(ErrorCode::InvalidParams, "normal_angle_max must be in (0, 90]");
  }
}

PointCloud build_auto_roi(const PointCloud& bed, const PointCloud& spec, const RigidTransform& t_coarse,
                          const RoiParams& roi, Aabb* box) {
  roi.validate();
  if (t_coarse.source() != spec.frame || t_coarse.target() != bed.frame) {
    throw Error(ErrorCode::FrameMismatch, "ROI transform must map the specimen frame into the bed frame");
  }
  std::vector<Vec3> moved;
  moved.reserve(spec.size());
  for (const Vec3& q : spec.points) moved.push_back(t_coarse * q);
  const Aabb bounds = dilate(aabb_of(moved), roi.margin);
  if (box) *box = bounds;

  std::vector<std::size_t> inside;
  for (std::size_t i = 0; i < bed.size(); ++i) {
    if (bounds.contains(bed.points[i])) inside.push_back(i);
  }
  if (inside.empty()) throw Error(ErrorCode::EmptyRoi, "no bed point inside the dilated specimen box");
  return select(bed, inside);
}

double PlaneCorrespondences::rmse() const {
  if (residual.empty()) return 0.0;
  double s = 0.0;
  for (double r : residual) s += r * r;
  return std::sqrt(s / static_cast<double>(residual.size()));
}

PlaneCorrespondences find_plane_correspondences(const PointCloud& bed_roi, const SpatialIndex& bed_index,
                                                const PointCloud& spec, const RigidTransform& t,
                                                const IcpParams& params) {
  const auto& bed_normals = *bed_roi.normals;
  const double max_d2 = params.max_corr_dist * params.max_corr_dist;
  const double min_cos = std::cos(params.normal_angle_max * std::numbers::pi / 180.0);
  PlaneCorrespondences c;
  for (std::size_t j = 0; j < spec.size(); ++j) {
    const Vec3 s = t * spec.points[j];
    const Neighbor nb = bed_index.nearest(s);
    const Vec3& n = bed_normals[nb.index];
    bool keep = nb.dist2 <= max_d2;
    if (keep && spec.normals) keep = n.dot(t.rotate((*spec.normals)[j])) >= min_cos;
    if (!keep) {
      ++c.rejected;
      continue;
    }
    const double r = (s - bed_roi.points[nb.index]).dot(n);
    c.spec_index.push_back(j);
    c.bed_index.push_back(nb.index);
    c.residual.push_back(r);
    c.weight.push_back(std::abs(r) <= params.huber_delta ? 1.0 : params.huber_delta / std::abs(r));
  }
  return c;
}

PlaneStep solve_plane_step(const PointCloud& bed_roi, const PointCloud& spec, const RigidTransform& t,
                           const PlaneCorrespondences& corr) {
  PlaneStep step;
  const std::size_t m = corr.size();
  if (m == 0) return step;
  for (std::size_t k = 0; k < m; ++k) step.pivot += t * spec.points[corr.spec_index[k]];
  step.pivot /= static_cast<double>(m);

  const auto& normals = *bed_roi.normals;
  std::vector<Vector6d> jac(m);
  Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
  Vector6d g = Vector6d::Zero();
  for (std::size_t k = 0; k < m; ++k) {
    const Vec3& n = normals[corr.bed_index[k]];
    const Vec3 arm = t * spec.points[corr.spec_index[k]] - step.pivot;
    jac[k].head<3>() = arm.cross(n);
    jac[k].tail<3>() = n;
    h += corr.weight[k] * jac[k] * jac[k].transpose();
    g += corr.weight[k] * corr.residual[k] * jac[k];
    step.cost_before += corr.weight[k] * corr.residual[k] * corr.residual[k];
  }
  // Minimum-norm solution keeps unobservable directions (e.g. sliding on a plane) at zero.
  step.delta = -Eigen::CompleteOrthogonalDecomposition<Eigen::Matrix<double, 6, 6>>(h).solve(g);
  for (std::size_t k = 0; k < m; ++k) {
    const double r = corr.residual[k] + jac[k].dot(step.delta);
    step.cost_after += corr.weight[k] * r * r;
  }
  return step;
}

RigidTransform apply_step(const RigidTransform& t, const PlaneStep& step) {
  const Vec3 omega = step.delta.head<3>();
  const double angle = omega.norm();
  const Mat3 dr = angle > 0.0 ? axis_angle(omega, angle) : Mat3::Identity();
  return RigidTransform(dr * t.rotation(),
                        dr * (t.translation() - step.pivot) + step.pivot + step.delta.tail<3>(), t.source(),
                        t.target());
}

RegistrationResult icp_point_to_plane(const PointCloud& bed_roi, const PointCloud& spec,
                                      const RigidTransform& t_init, const IcpParams& params, IcpTrace* trace) {
  params.validate();
  if (!bed_roi.has_normals()) throw Error(ErrorCode::MissingNormals, "ICP target needs normals", "fine");
  if (t_init.source() != spec.frame || t_init.target() != bed_roi.frame) {
    throw Error(ErrorCode::FrameMismatch, "ICP initial transform must map specimen into bed frame", "fine");
  }
  const SpatialIndex index(bed_roi.points);

  RigidTransform t = t_init;
  RigidTransform best = t_init;
  double best_rmse = std::numeric_limits<double>::infinity();
  PlaneCorrespondences best_corr;
  double prev = std::numeric_limits<double>::infinity();
  bool converged = false;
  std::size_t iters = 0;

  for (std::size_t it = 0; it < params.max_iters; ++it) {
    PlaneCorrespondences corr = find_plane_correspondences(bed_roi, index, spec, t, params);
    if (corr.size() == 0) {
      throw Error(ErrorCode::NoCorrespondences, "every ICP correspondence was rejected", "fine");
    }
    iters = it + 1;
    const double rmse = corr.rmse();
    if (trace) trace->rmse.push_back(rmse);
    if (rmse < best_rmse) {
      best_rmse = rmse;
      best = t;
      best_corr = corr;
    }
    // The absolute floor lets exact (zero-residual) fits terminate.
    if (std::isfinite(prev) && std::abs(prev - rmse) <= params.rel_change_tol * prev + 1e-12) {
      converged = true;
      best = t;
      best_rmse = rmse;
      best_corr = std::move(corr);
      break;
    }
    prev = rmse;
    const PlaneStep step = solve_plane_step(bed_roi, spec, t, corr);
    if (trace) trace->steps.push_back(step);
    t = apply_step(t, step);
  }

  RegistrationResult result{best, {}, best_rmse, iters, converged, Stage::Fine};
  for (std::size_t k = 0; k < best_corr.size(); ++k) {
    result.inlier_pairs.push(best_corr.bed_index[k], best_corr.spec_index[k], best_corr.weight[k]);
  }
  return result;
}

RegistrationParams RegistrationParams::for_voxel(double voxel) {
  RegistrationParams p;
  p.voxel = voxel;
  p.features = FeatureParams::for_voxel(voxel);
  p.coarse = CoarseParams::for_voxel(voxel);
  p.icp = IcpParams::for_voxel(voxel);
  return p;
}

RegistrationOutput register_clouds(const PointCloud& bed, const PointCloud& spec,
                                   const RegistrationParams& params, std::uint64_t seed) {
  if (!(params.voxel > 0.0)) throw Error(ErrorCode::InvalidParams, "voxel must be > 0");
  auto prepare = [&](const PointCloud& cloud, const Vec3& viewpoint) {
    PointCloud c = cloud;
    c.curvatures.reset();
    if (!c.has_normals()) c = estimate_normals(c, params.features.normal_radius, viewpoint);
    if (params.downsample) c = voxel_downsample(c, params.voxel);
    return c;
  };
  PointCloud bed_p;
  PointCloud spec_p;
  try {
    bed_p = prepare(bed, params.bed_viewpoint);
    spec_p = prepare(spec, params.spec_viewpoint);
  } catch (const Error& e) {
    throw e.with_stage("preprocess");
  }

  CoarseDiagnostics diag;
  RegistrationResult coarse = register_coarse(bed_p, spec_p, params.features, params.coarse, seed, &diag);
  Aabb box;
  PointCloud roi;
  try {
    roi = build_auto_roi(bed_p, spec_p, coarse.transform, params.roi, &box);
  } catch (const Error& e) {
    throw e.with_stage("roi");
  }
  RegistrationResult fine = icp_point_to_plane(roi, spec_p, coarse.transform, params.icp);
  return RegistrationOutput{std::move(coarse), std::move(fine), std::move(diag), roi.size(), box};
}

}  // namespace mreg
