#include "mreg/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "mreg/io.hpp"
#include "mreg/random.hpp"
#include "mreg/spatial_index.hpp"

namespace mreg {

FeatureParams FeatureParams::for_voxel(double voxel) {
  FeatureParams p;
  p.normal_radius = 2.0 * voxel;
  p.fpfh_radius = 5.0 * voxel;
  return p;
}

void FeatureParams::validate() const {
  if (!(normal_radius > 0.0) || !(fpfh_radius > 0.0)) {
    throw Error(ErrorCode::InvalidParams, "feature radii must be > 0");
  }
  if (n_keypoints < 3) throw Error(ErrorCode::InvalidParams, "n_keypoints must be >= 3");
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidParams, "tau must be > 0");
  if (curvature_k < 4) throw Error(ErrorCode::InvalidParams, "curvature_k must be >= 4");
  if (!(relax_percentile > 0.0 && relax_percentile <= 1.0)) {
    throw Error(ErrorCode::InvalidParams, "relax_percentile must be in (0, 1]");
  }
}

void CorrespondenceSet::validate(std::size_t n_bed, std::size_t n_spec) const {
  if (weights.size() != pairs.size()) {
    throw Error(ErrorCode::InvalidParams, "correspondence weights length mismatch");
  }
  for (std::size_t c = 0; c < pairs.size(); ++c) {
    if (pairs[c].first >= n_bed || pairs[c].second >= n_spec) {
      throw Error(ErrorCode::InvalidParams, "correspondence index out of range");
    }
    if (!(weights[c] > 0.0)) throw Error(ErrorCode::InvalidParams, "correspondence weight must be > 0");
  }
}

std::optional<PairFeatures> pair_features(const Vec3& p1, const Vec3& n1, const Vec3& p2, const Vec3& n2) {
  Vec3 d = p2 - p1;
  const double dist = d.norm();
  if (dist == 0.0) return std::nullopt;
  d /= dist;

  // Source is the point whose normal makes the smaller angle with the line.
  const double a1 = n1.dot(d);
  const double a2 = n2.dot(d);
  Vec3 u = n1;
  Vec3 nt = n2;
  double phi = a1;
  if (std::abs(a1) < std::abs(a2)) {
    u = n2;
    nt = n1;
    d = -d;
    phi = -a2;
  }
  Vec3 v = d.cross(u);
  const double vn = v.norm();
  if (vn == 0.0) return std::nullopt;
  v /= vn;
  const Vec3 w = u.cross(v);
  return PairFeatures{v.dot(nt), phi, std::atan2(w.dot(nt), u.dot(nt)), dist};
}

std::array<std::size_t, 3> feature_bins(const PairFeatures& f) {
  auto bin = [](double unit) {
    const double b = std::floor(static_cast<double>(kFpfhBins) * unit);
    return static_cast<std::size_t>(std::clamp(b, 0.0, static_cast<double>(kFpfhBins - 1)));
  };
  return {bin((f.alpha + 1.0) * 0.5), bin((f.phi + 1.0) * 0.5),
          bin((f.theta + std::numbers::pi) / (2.0 * std::numbers::pi))};
}

CurvatureField curvature_scores(const PointCloud& cloud, std::size_t k_neighbors) {
  if (k_neighbors < 4) throw Error(ErrorCode::InvalidParams, "curvature needs k >= 4");
  if (cloud.size() < k_neighbors + 1) {
    throw Error(ErrorCode::TooFewPoints, "curvature needs at least k+1 points");
  }
  const SpatialIndex index(cloud.points);
  CurvatureField field;
  field.scores.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nbrs = index.knn(cloud.points[i], k_neighbors + 1);
    Vec3 mean = Vec3::Zero();
    for (const Neighbor& nb : nbrs) mean += cloud.points[nb.index];
    mean /= static_cast<double>(nbrs.size());
    Mat3 cov = Mat3::Zero();
    for (const Neighbor& nb : nbrs) {
      const Vec3 d = cloud.points[nb.index] - mean;
      cov += d * d.transpose();
    }
    const Vec3 ev = Eigen::SelfAdjointEigenSolver<Mat3>(cov, Eigen::EigenvaluesOnly).eigenvalues();
    const double total = ev.sum();
    field.scores[i] = total > 0.0 ? std::max(ev[0], 0.0) / total : 0.0;
  }
  return field;
}

std::vector<std::size_t> sample_keypoints(const CurvatureField& field, std::size_t n, std::uint64_t seed,
                                          bool allow_fallback) {
  const std::size_t total_points = field.scores.size();
  if (n > total_points) {
    throw Error(ErrorCode::InvalidParams, "cannot sample more keypoints than points");
  }
  std::vector<double> weight(field.scores);
  std::size_t positive = 0;
  for (double& w : weight) {
    if (!(w >= 0.0)) throw Error(ErrorCode::InvalidParams, "curvature scores must be >= 0");
    if (w > 0.0) ++positive;
  }
  if (positive < n && !allow_fallback) {
    throw Error(ErrorCode::AllZeroCurvature,
                positive == 0 ? "every curvature score is zero" : "too few positive curvature scores");
  }

  Rng rng(seed);
  std::vector<std::size_t> picked;
  picked.reserve(n);
  const std::size_t weighted_draws = std::min(n, positive);
  for (std::size_t draw = 0; draw < weighted_draws; ++draw) {
    double total = 0.0;
    for (double w : weight) total += w;
    const double u = rng.uniform() * total;
    double cum = 0.0;
    std::size_t chosen = total_points;
    std::size_t last_positive = total_points;
    for (std::size_t i = 0; i < total_points; ++i) {
      if (weight[i] <= 0.0) continue;
      last_positive = i;
      cum += weight[i];
      if (u < cum) {
        chosen = i;
        break;
      }
    }
    if (chosen == total_points) chosen = last_positive;  // u landed on the rounding edge
    picked.push_back(chosen);
    weight[chosen] = 0.0;
  }

  if (picked.size() < n) {
    std::vector<std::size_t> zero;
    for (std::size_t i = 0; i < total_points; ++i) {
      if (field.scores[i] == 0.0) zero.push_back(i);
    }
    for (std::size_t k = 0; picked.size() < n; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(rng.below(zero.size() - k));
      std::swap(zero[k], zero[j]);
      picked.push_back(zero[k]);
    }
  }
  return picked;
}

namespace {

using Spfh = std::array<double, kFpfhSize>;

Spfh compute_spfh(const PointCloud& cloud, std::size_t i, const std::vector<Neighbor>& nbrs) {
  Spfh h{};
  const auto& normals = *cloud.normals;
  std::size_t valid = 0;
  for (const Neighbor& nb : nbrs) {
    if (nb.index == i) continue;
    const auto f = pair_features(cloud.points[i], normals[i], cloud.points[nb.index], normals[nb.index]);
    if (!f) continue;
    const auto bins = feature_bins(*f);
    h[bins[0]] += 1.0;
    h[kFpfhBins + bins[1]] += 1.0;
    h[2 * kFpfhBins + bins[2]] += 1.0;
    ++valid;
  }
  if (valid > 0) {
    const double scale = 100.0 / static_cast<double>(valid);
    for (double& v : h) v *= scale;
  }
  return h;
}

void normalize_blocks(FpfhDescriptor& d) {
  for (std::size_t b = 0; b < 3; ++b) {
    double sum = 0.0;
    for (std::size_t k = 0; k < kFpfhBins; ++k) sum += d[b * kFpfhBins + k];
    if (sum <= 0.0) continue;
    const double scale = 100.0 / sum;
    for (std::size_t k = 0; k < kFpfhBins; ++k) d[b * kFpfhBins + k] *= scale;
  }
}

}  // namespace

std::vector<FpfhDescriptor> compute_fpfh(const PointCloud& cloud, std::span<const std::size_t> at_indices,
                                         const FeatureParams& params) {
  if (!cloud.has_normals()) throw Error(ErrorCode::MissingNormals, "FPFH requires normals");
  if (!(params.fpfh_radius > 0.0)) throw Error(ErrorCode::InvalidParams, "fpfh_radius must be > 0");
  for (std::size_t i : at_indices) {
    if (i >= cloud.size()) throw Error(ErrorCode::InvalidParams, "FPFH index out of range");
  }

  const SpatialIndex index(cloud.points);
  std::vector<std::optional<Spfh>> spfh_cache(cloud.size());
  auto spfh_of = [&](std::size_t i) -> const Spfh& {
    if (!spfh_cache[i]) spfh_cache[i] = compute_spfh(cloud, i, index.radius(cloud.points[i], params.fpfh_radius));
    return *spfh_cache[i];
  };

  std::vector<FpfhDescriptor> out;
  out.reserve(at_indices.size());
  for (std::size_t i : at_indices) {
    const auto nbrs = index.radius(cloud.points[i], params.fpfh_radius);
    FpfhDescriptor d = spfh_of(i);
    std::size_t k = 0;
    FpfhDescriptor acc{};
    for (const Neighbor& nb : nbrs) {
      if (nb.index == i || nb.dist2 == 0.0) continue;
      const double weight = 1.0 / std::sqrt(nb.dist2);
      const Spfh& s = spfh_of(nb.index);
      for (std::size_t b = 0; b < kFpfhSize; ++b) acc[b] += weight * s[b];
      ++k;
    }
    if (k > 0) {
      for (std::size_t b = 0; b < kFpfhSize; ++b) d[b] += acc[b] / static_cast<double>(k);
    }
    normalize_blocks(d);
    out.push_back(d);
  }
  return out;
}

double descriptor_distance(const FpfhDescriptor& a, const FpfhDescriptor& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < kFpfhSize; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

namespace {

struct NearestTables {
  std::vector<std::size_t> bed_of_spec;
  std::vector<double> dist_of_spec;
  std::vector<std::size_t> spec_of_bed;
};

NearestTables nearest_tables(std::span<const FpfhDescriptor> bed, std::span<const FpfhDescriptor> spec) {
  NearestTables t;
  t.bed_of_spec.assign(spec.size(), 0);
  t.dist_of_spec.assign(spec.size(), std::numeric_limits<double>::infinity());
  t.spec_of_bed.assign(bed.size(), 0);
  std::vector<double> best_bed(bed.size(), std::numeric_limits<double>::infinity());
  for (std::size_t j = 0; j < spec.size(); ++j) {
    for (std::size_t i = 0; i < bed.size(); ++i) {
      const double d = descriptor_distance(bed[i], spec[j]);
      // Strict comparisons keep the lowest index on ties.
      if (d < t.dist_of_spec[j]) {
        t.dist_of_spec[j] = d;
        t.bed_of_spec[j] = i;
      }
      if (d < best_bed[i]) {
        best_bed[i] = d;
        t.spec_of_bed[i] = j;
      }
    }
  }
  return t;
}

CorrespondenceSet gate(const NearestTables& t, double tau, bool mutual) {
  CorrespondenceSet c;
  for (std::size_t j = 0; j < t.bed_of_spec.size(); ++j) {
    const std::size_t i = t.bed_of_spec[j];
    if (!(t.dist_of_spec[j] < tau)) continue;
    if (mutual && t.spec_of_bed[i] != j) continue;
    c.push(i, j);
  }
  return c;
}

}  // namespace

CorrespondenceSet match_descriptors(std::span<const FpfhDescriptor> bed_desc,
                                    std::span<const FpfhDescriptor> spec_desc, const FeatureParams& params) {
  if (bed_desc.empty() || spec_desc.empty()) throw Error(ErrorCode::EmptyInput, "empty descriptor list");
  CorrespondenceSet c = gate(nearest_tables(bed_desc, spec_desc), params.tau, params.mutual_check);
  if (c.empty()) throw Error(ErrorCode::NoCorrespondences, "no descriptor pair below tau");
  return c;
}

AdaptiveMatch match_descriptors_adaptive(std::span<const FpfhDescriptor> bed_desc,
                                         std::span<const FpfhDescriptor> spec_desc,
                                         const FeatureParams& params) {
  if (bed_desc.empty() || spec_desc.empty()) throw Error(ErrorCode::EmptyInput, "empty descriptor list");
  const NearestTables t = nearest_tables(bed_desc, spec_desc);
  AdaptiveMatch m{gate(t, params.tau, params.mutual_check), params.tau};
  if (m.correspondences.size() < params.min_pairs) {
    std::vector<double> d = t.dist_of_spec;
    std::sort(d.begin(), d.end());
    const double h = params.relax_percentile * static_cast<double>(d.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, d.size() - 1);
    const double relaxed = d[lo] + (h - static_cast<double>(lo)) * (d[hi] - d[lo]);
    if (relaxed > params.tau) {
      m.tau_used = relaxed;
      m.correspondences = gate(t, relaxed, params.mutual_check);
    }
  }
  if (m.correspondences.empty()) throw Error(ErrorCode::NoCorrespondences, "no descriptor pair below tau");
  return m;
}

void write_descriptors_csv(const std::filesystem::path& path, std::span<const std::size_t> indices,
                           std::span<const FpfhDescriptor> descriptors) {
  if (indices.size() != descriptors.size()) {
    throw Error(ErrorCode::LengthMismatch, "indices and descriptors differ in length");
  }
  std::string text = "index";
  for (std::size_t k = 0; k < kFpfhSize; ++k) text += ",d" + std::to_string(k);
  text += '\n';
  for (std::size_t r = 0; r < indices.size(); ++r) {
    text += std::to_string(indices[r]);
    for (double v : descriptors[r]) text += ',' + format_double(v);
    text += '\n';
  }
  write_text_file(path, text);
}

}  // namespace mreg
