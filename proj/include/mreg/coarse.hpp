#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mreg/features.hpp"
#include "mreg/geometry.hpp"

namespace mreg {

// Translation-invariant measurement built from correspondences a < b.
struct Tim {
  Vec3 dp;  // p_a - p_b (bed)
  Vec3 dq;  // q_a - q_b (specimen)
  std::size_t corr_a = 0;
  std::size_t corr_b = 0;
  double weight = 1.0;  // product of the two correspondence weights
};

struct CoarseParams {
  double eps = 3.0;             // TLS truncation radius, mm
  double gamma = 0.1;           // length-consistency tolerance
  double gnc_mu_update = 1.4;
  std::size_t max_gnc_iters = 64;
  std::size_t min_inliers = 5;
  std::size_t max_tims = 5000;

  static CoarseParams for_voxel(double voxel);  // eps = 3 v
  void validate() const;
};

enum class Stage { Coarse, Fine };
const char* to_string(Stage stage);

struct RegistrationResult {
  RigidTransform transform;
  CorrespondenceSet inlier_pairs;
  double rmse_inliers = 0.0;  // mm
  std::size_t iterations = 0;
  bool converged = false;
  Stage stage = Stage::Coarse;
};

std::vector<Tim> build_tims(const CorrespondenceSet& corr, const PointCloud& bed, const PointCloud& spec,
                            std::size_t max_tims, std::uint64_t seed);

// Keeps TIMs with | |dp| - |dq| | <= gamma * max(|dq|, 1 mm). AllPruned if none survive.
std::vector<Tim> prune_by_length_consistency(std::span<const Tim> tims, double gamma);

// Σ w · min(|dp - R dq|², eps²)
double tls_objective(std::span<const Tim> tims, const Mat3& rotation, double eps);

// Closed-form argmin_R Σ w_k |dp_k - R dq_k|² (weights scale the TIM weights).
Mat3 weighted_rotation_fit(std::span<const Tim> tims, std::span<const double> weights);

struct RotationSolution {
  Mat3 rotation = Mat3::Identity();
  std::vector<bool> inliers;  // |dp - R dq| <= eps under the returned rotation
  std::size_t iterations = 0;
  bool converged = false;
  // Best TLS objective after initialization and after each GNC round; non-increasing.
  std::vector<double> objective_trace;
};

RotationSolution solve_rotation_gnc_tls(std::span<const Tim> tims, const CoarseParams& params);

struct TranslationSolution {
  Vec3 translation = Vec3::Zero();
  std::vector<bool> inliers;  // residual within eps (Euclidean) of the estimate
};

TranslationSolution solve_translation_tls(const CorrespondenceSet& corr, const PointCloud& bed,
                                          const PointCloud& spec, const Mat3& rotation,
                                          const CoarseParams& params);

struct CoarseDiagnostics {
  std::size_t bed_keypoints = 0;
  std::size_t spec_keypoints = 0;
  std::size_t correspondences = 0;
  double tau_used = 0.0;
  std::size_t tims = 0;
  std::size_t tims_after_pruning = 0;
  std::size_t rotation_inliers = 0;
  std::size_t translation_inliers = 0;
  std::vector<double> objective_trace;
};

// Curvature -> sampling -> FPFH -> matching -> TIMs -> pruning -> rotation -> translation.
// Both clouds need normals. Returns bed.frame <- spec.frame with stage Coarse.
RegistrationResult register_coarse(const PointCloud& bed, const PointCloud& spec, const FeatureParams& fparams,
                                   const CoarseParams& cparams, std::uint64_t seed,
                                   CoarseDiagnostics* diagnostics = nullptr);

}  // namespace mreg
