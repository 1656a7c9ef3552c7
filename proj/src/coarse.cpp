#include "mreg/coarse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "mreg/random.hpp"

namespace mreg {

CoarseParams CoarseParams::for_voxel(double voxel) {
  CoarseParams p;
  p.eps = 3.0 * voxel;
  return p;
}

void CoarseParams::validate() const {
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidParams, "eps must be > 0");
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error(ErrorCode::InvalidParams, "gamma must be in (0, 1)");
  if (!(gnc_mu_update > 1.0)) throw Error(ErrorCode::InvalidParams, "gnc_mu_update must be > 1");
  if (max_gnc_iters == 0) throw Error(ErrorCode::InvalidParams, "max_gnc_iters must be > 0");
  if (max_tims == 0) throw Error(ErrorCode::InvalidParams, "max_tims must be > 0");
}

const char* to_string(Stage stage) { return stage == Stage::Coarse ? "coarse" : "fine"; }

std::vector<Tim> build_tims(const CorrespondenceSet& corr, const PointCloud& bed, const PointCloud& spec,
                            std::size_t max_tims, std::uint64_t seed) {
  const std::size_t n = corr.size();
  if (n < 2) throw Error(ErrorCode::TooFewCorrespondences, "TIMs need at least 2 correspondences");
  corr.validate(bed.size(), spec.size());

  auto make = [&](std::size_t a, std::size_t b) {
    const auto [pa, qa] = corr.pairs[a];
    const auto [pb, qb] = corr.pairs[b];
    return Tim{bed.points[pa] - bed.points[pb], spec.points[qa] - spec.points[qb], a, b,
               corr.weights[a] * corr.weights[b]};
  };

  const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  std::vector<Tim> tims;
  if (total <= max_tims) {
    tims.reserve(total);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) tims.push_back(make(a, b));
    }
    return tims;
  }

  // Seeded subset of pair ranks; rank r enumerates (a, b), a < b, row-major.
  Rng rng(seed);
  std::unordered_set<std::uint64_t> seen;
  std::vector<std::uint64_t> ranks;
  ranks.reserve(max_tims);
  while (ranks.size() < max_tims) {
    const std::uint64_t r = rng.below(total);
    if (seen.insert(r).second) ranks.push_back(r);
  }
  std::sort(ranks.begin(), ranks.end());
  std::vector<std::uint64_t> row_start(n);
  for (std::size_t a = 0, acc = 0; a < n; ++a) {
    row_start[a] = acc;
    acc += n - 1 - a;
  }
  tims.reserve(max_tims);
  for (std::uint64_t r : ranks) {
    const auto it = std::upper_bound(row_start.begin(), row_start.end(), r);
    const std::size_t a = static_cast<std::size_t>(it - row_start.begin()) - 1;
    const std::size_t b = a + 1 + static_cast<std::size_t>(r - row_start[a]);
    tims.push_back(make(a, b));
  }
  return tims;
}

std::vector<Tim> prune_by_length_consistency(std::span<const Tim> tims, double gamma) {
  if (tims.empty()) throw Error(ErrorCode::EmptyInput, "no TIMs to prune");
  std::vector<Tim> kept;
  kept.reserve(tims.size());
  for (const Tim& t : tims) {
    const double lq = t.dq.norm();
    if (std::abs(t.dp.norm() - lq) <= gamma * std::max(lq, 1.0)) kept.push_back(t);
  }
  if (kept.empty()) throw Error(ErrorCode::AllPruned, "length-consistency check removed every TIM");
  return kept;
}

double tls_objective(std::span<const Tim> tims, const Mat3& rotation, double eps) {
  const double eps2 = eps * eps;
  double cost = 0.0;
  for (const Tim& t : tims) {
    cost += t.weight * std::min((t.dp - rotation * t.dq).squaredNorm(), eps2);
  }
  return cost;
}

Mat3 weighted_rotation_fit(std::span<const Tim> tims, std::span<const double> weights) {
  Mat3 h = Mat3::Zero();
  for (std::size_t k = 0; k < tims.size(); ++k) {
    h += (weights[k] * tims[k].weight) * tims[k].dq * tims[k].dp.transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixV() * d * svd.matrixU().transpose();
}

RotationSolution solve_rotation_gnc_tls(std::span<const Tim> tims, const CoarseParams& params) {
  params.validate();
  if (tims.size() < 3) throw Error(ErrorCode::InsufficientInliers, "rotation estimate needs >= 3 TIMs");

  const std::size_t n = tims.size();
  const double eps2 = params.eps * params.eps;
  std::vector<double> weights(n, 1.0);
  std::vector<double> r2(n);
  auto residuals = [&](const Mat3& rot) {
    double max_r2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      r2[k] = (tims[k].dp - rot * tims[k].dq).squaredNorm();
      max_r2 = std::max(max_r2, r2[k]);
    }
    return max_r2;
  };

  RotationSolution sol;
  Mat3 rot = weighted_rotation_fit(tims, weights);
  const double max_r2 = residuals(rot);
  Mat3 best = rot;
  double best_cost = tls_objective(tims, rot, params.eps);
  sol.objective_trace.push_back(best_cost);

  if (max_r2 <= eps2) {
    sol.converged = true;  // every TIM already inside the truncation radius
  } else {
    // Convex surrogate start: mu from the largest residual of the unweighted fit.
    double mu = eps2 / std::max(2.0 * max_r2 - eps2, 1e-12);
    double prev_cost = std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < params.max_gnc_iters; ++iter) {
      sol.iterations = iter + 1;
      const double lo = mu / (mu + 1.0) * eps2;
      const double hi = (mu + 1.0) / mu * eps2;
      double weight_sum = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (r2[k] >= hi) {
          weights[k] = 0.0;
        } else if (r2[k] <= lo) {
          weights[k] = 1.0;
        } else {
          weights[k] = params.eps * std::sqrt(mu * (mu + 1.0) / r2[k]) - mu;
        }
        weight_sum += weights[k];
      }
      if (weight_sum <= 0.0) break;

      rot = weighted_rotation_fit(tims, weights);
      residuals(rot);
      const double cost = tls_objective(tims, rot, params.eps);
      if (cost < best_cost) {
        best_cost = cost;
        best = rot;
      }
      sol.objective_trace.push_back(best_cost);

      double binary_gap = 0.0;
      for (double w : weights) binary_gap += w * (1.0 - w);
      if (binary_gap < 1e-9 && std::abs(cost - prev_cost) <= 1e-12 * std::max(1.0, cost)) {
        sol.converged = true;
        break;
      }
      prev_cost = cost;
      mu *= params.gnc_mu_update;
    }
  }

  // Polish on the inlier set of the best iterate; accepted only if it lowers the objective.
  std::vector<double> inlier_w(n, 0.0);
  std::size_t count = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if ((tims[k].dp - best * tims[k].dq).squaredNorm() <= eps2) {
      inlier_w[k] = 1.0;
      ++count;
    }
  }
  if (count >= 3) {
    const Mat3 polished = weighted_rotation_fit(tims, inlier_w);
    const double cost = tls_objective(tims, polished, params.eps);
    if (cost <= best_cost) {
      best = polished;
      best_cost = cost;
      sol.objective_trace.push_back(best_cost);
    }
  }

  sol.rotation = nearest_rotation(best);
  sol.inliers.resize(n);
  std::size_t inliers = 0;
  for (std::size_t k = 0; k < n; ++k) {
    sol.inliers[k] = (tims[k].dp - sol.rotation * tims[k].dq).squaredNorm() <= eps2;
    inliers += sol.inliers[k] ? 1 : 0;
  }
  if (inliers < 3) throw Error(ErrorCode::InsufficientInliers, "GNC-TLS kept fewer than 3 inlier TIMs");
  return sol;
}

TranslationSolution solve_translation_tls(const CorrespondenceSet& corr, const PointCloud& bed,
                                          const PointCloud& spec, const Mat3& rotation,
                                          const CoarseParams& params) {
  if (corr.empty()) throw Error(ErrorCode::InsufficientInliers, "translation needs >= 1 correspondence");
  corr.validate(bed.size(), spec.size());
  const std::size_t n = corr.size();
  std::vector<Vec3> res(n);
  for (std::size_t c = 0; c < n; ++c) {
    res[c] = bed.points[corr.pairs[c].first] - rotation * spec.points[corr.pairs[c].second];
  }

  // Per axis: the window [v, v + 2 eps] with the largest weighted count wins
  // (lowest v on ties); its centre is the voting value.
  Vec3 estimate;
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<std::size_t> order(n);
    for (std::size_t c = 0; c < n; ++c) order[c] = c;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return res[a][axis] < res[b][axis] || (res[a][axis] == res[b][axis] && a < b);
    });
    double best_w = -1.0;
    std::size_t best_lo = 0;
    std::size_t best_hi = 0;
    double window_w = 0.0;
    for (std::size_t lo = 0, hi = 0; lo < n; ++lo) {
      while (hi < n && res[order[hi]][axis] <= res[order[lo]][axis] + 2.0 * params.eps) {
        window_w += corr.weights[order[hi]];
        ++hi;
      }
      if (window_w > best_w) {
        best_w = window_w;
        best_lo = lo;
        best_hi = hi;
      }
      window_w -= corr.weights[order[lo]];
    }
    double sum = 0.0;
    double wsum = 0.0;
    for (std::size_t k = best_lo; k < best_hi; ++k) {
      sum += corr.weights[order[k]] * res[order[k]][axis];
      wsum += corr.weights[order[k]];
    }
    estimate[axis] = sum / wsum;
  }

  // Refine in 3D: inliers are residuals within eps of the estimate, the
  // estimate is their weighted mean, until the inlier set stops changing.
  // The ball test does not depend on the bed's axes.
  TranslationSolution sol;
  std::vector<bool> inside(n, false);
  for (int round = 0; round < 16; ++round) {
    std::vector<bool> next(n);
    double wsum = 0.0;
    Vec3 sum = Vec3::Zero();
    for (std::size_t c = 0; c < n; ++c) {
      next[c] = (res[c] - estimate).norm() <= params.eps;
      if (next[c]) {
        sum += corr.weights[c] * res[c];
        wsum += corr.weights[c];
      }
    }
    if (wsum <= 0.0) {
      if (round == 0) throw Error(ErrorCode::InsufficientInliers, "no correspondence agrees on translation");
      break;
    }
    estimate = sum / wsum;
    const bool stable = next == inside;
    inside = std::move(next);
    if (stable) break;
  }
  sol.inliers = std::move(inside);
  sol.translation = estimate;
  return sol;
}

RegistrationResult register_coarse(const PointCloud& bed, const PointCloud& spec, const FeatureParams& fparams,
                                   const CoarseParams& cparams, std::uint64_t seed,
                                   CoarseDiagnostics* diagnostics) {
  fparams.validate();
  cparams.validate();
  if (!bed.has_normals() || !spec.has_normals()) {
    throw Error(ErrorCode::MissingNormals, "coarse registration requires normals on both clouds", "coarse");
  }
  CoarseDiagnostics diag;
  try {
    const std::size_t n_bed = std::min(fparams.n_keypoints, bed.size() / 3);
    const std::size_t n_spec = std::min(fparams.n_keypoints, spec.size() / 3);
    if (n_bed < 3 || n_spec < 3) throw Error(ErrorCode::TooFewPoints, "clouds too small for keypoint sampling");

    const auto bed_kp = sample_keypoints(curvature_scores(bed, fparams.curvature_k), n_bed, derive_seed(seed, 1));
    const auto spec_kp =
        sample_keypoints(curvature_scores(spec, fparams.curvature_k), n_spec, derive_seed(seed, 2));
    diag.bed_keypoints = bed_kp.size();
    diag.spec_keypoints = spec_kp.size();

    const auto bed_desc = compute_fpfh(bed, bed_kp, fparams);
    const auto spec_desc = compute_fpfh(spec, spec_kp, fparams);
    const AdaptiveMatch match = match_descriptors_adaptive(bed_desc, spec_desc, fparams);
    diag.tau_used = match.tau_used;

    CorrespondenceSet corr;
    for (std::size_t c = 0; c < match.correspondences.size(); ++c) {
      const auto [i, j] = match.correspondences.pairs[c];
      corr.push(bed_kp[i], spec_kp[j], match.correspondences.weights[c]);
    }
    diag.correspondences = corr.size();

    const auto tims = build_tims(corr, bed, spec, cparams.max_tims, derive_seed(seed, 3));
    diag.tims = tims.size();
    const auto kept = prune_by_length_consistency(tims, cparams.gamma);
    diag.tims_after_pruning = kept.size();
    if (kept.size() < cparams.min_inliers) {
      throw Error(ErrorCode::AllPruned, "fewer than min_inliers TIMs survive length-consistency pruning");
    }

    const RotationSolution rot = solve_rotation_gnc_tls(kept, cparams);
    diag.rotation_inliers = static_cast<std::size_t>(std::count(rot.inliers.begin(), rot.inliers.end(), true));
    diag.objective_trace = rot.objective_trace;

    const TranslationSolution trans = solve_translation_tls(corr, bed, spec, rot.rotation, cparams);

    RegistrationResult result{RigidTransform(rot.rotation, trans.translation, spec.frame, bed.frame),
                              {}, 0.0, rot.iterations, rot.converged, Stage::Coarse};
    double sq = 0.0;
    for (std::size_t c = 0; c < corr.size(); ++c) {
      if (!trans.inliers[c]) continue;
      const auto [i, j] = corr.pairs[c];
      result.inlier_pairs.push(i, j, corr.weights[c]);
      sq += (bed.points[i] - result.transform * spec.points[j]).squaredNorm();
    }
    diag.translation_inliers = result.inlier_pairs.size();
    result.rmse_inliers = std::sqrt(sq / static_cast<double>(result.inlier_pairs.size()));
    if (diagnostics) *diagnostics = diag;
    return result;
  } catch (const Error& e) {
    if (diagnostics) *diagnostics = diag;
    throw e.with_stage("coarse");
  }
}

}  // namespace mreg
