#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mreg/geometry.hpp"

namespace mreg {

struct FeatureParams {
  double normal_radius = 2.0;     // mm
  double fpfh_radius = 5.0;       // mm
  std::size_t n_keypoints = 1000; // upper bound; effective count is min(n, N/3)
  double tau = 50.0;              // descriptor-distance gate
  bool mutual_check = true;
  std::size_t curvature_k = 30;
  // Adaptive gate: when tau yields fewer pairs, tau is relaxed to the given
  // percentile of nearest-neighbor descriptor distances.
  std::size_t min_pairs = 20;
  double relax_percentile = 0.25;

  // Defaults scaled to voxel size v: normal radius 2v, FPFH radius 5v.
  static FeatureParams for_voxel(double voxel);
  void validate() const;
};

struct CurvatureField {
  std::vector<double> scores;  // surface variation, aligned with a cloud
};

inline constexpr std::size_t kFpfhBins = 11;
inline constexpr std::size_t kFpfhSize = 3 * kFpfhBins;

// Layout: [alpha bins | phi bins | theta bins], each block sums to 100 or is all zero.
using FpfhDescriptor = std::array<double, kFpfhSize>;

struct CorrespondenceSet {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (bed i, specimen j)
  std::vector<double> weights;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  void push(std::size_t bed, std::size_t spec, double weight = 1.0) {
    pairs.emplace_back(bed, spec);
    weights.push_back(weight);
  }
  void validate(std::size_t n_bed, std::size_t n_spec) const;
};

// Angular relation of an oriented point pair in the Darboux frame of the
// source point (the one whose normal is closer to the connecting line).
struct PairFeatures {
  double alpha;  // v · n_t, in [-1, 1]
  double phi;    // u · (p_t - p_s) / d, in [-1, 1]
  double theta;  // atan2(w · n_t, u · n_t), in [-pi, pi]
  double distance;
};

// nullopt for coincident points or a degenerate frame.
std::optional<PairFeatures> pair_features(const Vec3& p1, const Vec3& n1, const Vec3& p2, const Vec3& n2);
// Histogram bin of each feature.
std::array<std::size_t, 3> feature_bins(const PairFeatures& f);

// score_i = λ0 / (λ0 + λ1 + λ2) over the point and its k nearest neighbors.
CurvatureField curvature_scores(const PointCloud& cloud, std::size_t k_neighbors = 30);

// n distinct indices drawn without replacement with probability proportional to score.
// When fewer than n scores are positive, the remainder is drawn uniformly from the
// zero-score points (if allow_fallback) or AllZeroCurvature is thrown.
std::vector<std::size_t> sample_keypoints(const CurvatureField& field, std::size_t n, std::uint64_t seed,
                                          bool allow_fallback = true);

std::vector<FpfhDescriptor> compute_fpfh(const PointCloud& cloud, std::span<const std::size_t> at_indices,
                                         const FeatureParams& params);

double descriptor_distance(const FpfhDescriptor& a, const FpfhDescriptor& b);

// Pairs index into the descriptor lists. Weights are 1. NoCorrespondences if empty.
CorrespondenceSet match_descriptors(std::span<const FpfhDescriptor> bed_desc,
                                    std::span<const FpfhDescriptor> spec_desc, const FeatureParams& params);

struct AdaptiveMatch {
  CorrespondenceSet correspondences;
  double tau_used = 0.0;
};

// match_descriptors with the adaptive gate of FeatureParams::min_pairs.
AdaptiveMatch match_descriptors_adaptive(std::span<const FpfhDescriptor> bed_desc,
                                         std::span<const FpfhDescriptor> spec_desc,
                                         const FeatureParams& params);

// Debug export: "index,d0,...,d32" per row.
void write_descriptors_csv(const std::filesystem::path& path, std::span<const std::size_t> indices,
                           std::span<const FpfhDescriptor> descriptors);

}  // namespace mreg
