#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "mreg/features.hpp"
#include "support.hpp"

using namespace mreg;

namespace {

CurvatureField field_of(std::vector<double> s) { return CurvatureField{std::move(s)}; }

FpfhDescriptor constant_descriptor(double v) {
  FpfhDescriptor d;
  d.fill(v);
  return d;
}

}  // namespace

TEST(Curvature, PlaneScoresAreZero) {
  const auto grid = mreg::testing::plane_grid(12, 1.0);
  for (double s : curvature_scores(grid, 30).scores) EXPECT_LT(s, 1e-9);
}

TEST(Curvature, BumpApexExceedsFlatPlane) {
  PointCloud c;
  for (int i = -15; i <= 15; ++i) {
    for (int j = -15; j <= 15; ++j) {
      const double x = i * 0.5;
      const double y = j * 0.5;
      c.points.emplace_back(x, y, 3.0 * std::exp(-(x * x + y * y) / 2.0));
    }
  }
  const auto f = curvature_scores(c, 30);
  const std::size_t apex = 15 * 31 + 15;
  const std::size_t corner = 0;
  EXPECT_GT(f.scores[apex], f.scores[corner]);
  EXPECT_GT(f.scores[apex], 1e-3);
}

TEST(Curvature, SphereScoresAreNearlyUniform) {
  const auto f = curvature_scores(mreg::testing::sphere_points(3000, 10.0), 30);
  double mean = 0.0;
  for (double s : f.scores) mean += s;
  mean /= f.scores.size();
  double var = 0.0;
  for (double s : f.scores) var += (s - mean) * (s - mean);
  const double cv = std::sqrt(var / f.scores.size()) / mean;
  EXPECT_LT(cv, 0.3);
}

TEST(Sampling, UniformScoresExhaustiveDraw) {
  auto picks = sample_keypoints(field_of(std::vector<double>(17, 1.0)), 17, 5);
  std::sort(picks.begin(), picks.end());
  for (std::size_t i = 0; i < picks.size(); ++i) EXPECT_EQ(picks[i], i);
}

TEST(Sampling, TwoPointFrequency) {
  const auto f = field_of({1.0, 3.0});
  int hits = 0;
  const int trials = 100000;
  for (int t = 0; t < trials; ++t) hits += sample_keypoints(f, 1, derive_seed(77, t))[0] == 1;
  const double freq = double(hits) / trials;
  EXPECT_GE(freq, 0.74);
  EXPECT_LE(freq, 0.76);
}

TEST(Sampling, ZeroMassExcluded) {
  const auto f = field_of({0.0, 5.0});
  for (int t = 0; t < 200; ++t) EXPECT_EQ(sample_keypoints(f, 1, t)[0], 1u);
}

TEST(Sampling, FallbackAndStrictMode) {
  const auto f = field_of({0.0, 2.0, 0.0, 0.0});
  auto picks = sample_keypoints(f, 3, 9);
  EXPECT_EQ(picks[0], 1u);
  EXPECT_EQ(std::set<std::size_t>(picks.begin(), picks.end()).size(), 3u);
  try {
    sample_keypoints(f, 3, 9, false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AllZeroCurvature);
  }
  EXPECT_THROW(sample_keypoints(f, 5, 9), Error);
}

TEST(SamplingProperty, DeterministicAndDistinct) {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(5 + rng.below(200));
    for (double& v : s) v = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
    const std::size_t n = 1 + rng.below(s.size());
    const auto a = sample_keypoints(field_of(s), n, trial);
    const auto b = sample_keypoints(field_of(s), n, trial);
    EXPECT_EQ(a, b);
    EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), n);
  }
}

TEST(SamplingProperty, FirstDrawChiSquare) {
  Rng rng(42);
  for (int v = 0; v < 5; ++v) {
    const std::size_t m = 2 + rng.below(19);
    std::vector<double> s(m);
    for (double& x : s) x = rng.uniform(0.05, 1.0);
    const double total = std::accumulate(s.begin(), s.end(), 0.0);
    std::vector<double> counts(m, 0.0);
    const int trials = 100000;
    for (int t = 0; t < trials; ++t) counts[sample_keypoints(field_of(s), 1, derive_seed(1000 + v, t))[0]] += 1.0;
    double chi2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double expected = trials * s[i] / total;
      chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
    }
    EXPECT_GT(mreg::testing::chi_square_sf(chi2, double(m - 1)), 0.01) << "vector " << v;
  }
}

TEST(ChiSquareHelper, KnownQuantiles) {
  EXPECT_NEAR(mreg::testing::chi_square_sf(6.634896601021214, 1), 0.01, 1e-9);
  EXPECT_NEAR(mreg::testing::chi_square_sf(36.19086912927004, 19), 0.01, 1e-9);
  EXPECT_NEAR(mreg::testing::chi_square_sf(2.0, 2), std::exp(-1.0), 1e-12);
}

TEST(PairFeatures, CoincidentPointsHaveNone) {
  EXPECT_FALSE(pair_features(Vec3::Zero(), Vec3::UnitZ(), Vec3::Zero(), Vec3::UnitZ()));
}

TEST(Fpfh, IsolatedPointIsZero) {
  PointCloud c;
  c.points = {Vec3::Zero(), Vec3(100, 0, 0)};
  c.normals = std::vector<Vec3>{Vec3::UnitZ(), Vec3::UnitZ()};
  FeatureParams p;
  p.fpfh_radius = 5.0;
  const std::vector<std::size_t> at = {0};
  const auto d = compute_fpfh(c, at, p);
  for (double v : d[0]) EXPECT_EQ(v, 0.0);
}

TEST(Fpfh, MissingNormals) {
  PointCloud c;
  c.points = {Vec3::Zero()};
  const std::vector<std::size_t> at = {0};
  try {
    compute_fpfh(c, at, FeatureParams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingNormals);
  }
}

// Direct SPFH evaluation from the Darboux-frame formulas, independent of pair_features.
TEST(Fpfh, PlanarCrossMatchesDirectSpfh) {
  PointCloud c;
  c.points = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0), Vec3(0, -1, 0)};
  c.normals = std::vector<Vec3>(5, Vec3::UnitZ());
  FeatureParams p;
  p.fpfh_radius = 1.5;

  auto direct_spfh = [&](std::size_t i) {
    std::array<double, kFpfhSize> h{};
    int valid = 0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (j == i || (c.points[j] - c.points[i]).norm() > p.fpfh_radius) continue;
      const Vec3 d = (c.points[j] - c.points[i]).normalized();
      const Vec3 u = Vec3::UnitZ();
      const Vec3 v = d.cross(u).normalized();
      const Vec3 w = u.cross(v);
      const Vec3 nt = Vec3::UnitZ();
      const double alpha = v.dot(nt);
      const double phi = u.dot(d);
      const double theta = std::atan2(w.dot(nt), u.dot(nt));
      auto bin = [](double x) { return std::min<std::size_t>(kFpfhBins - 1, std::size_t(std::floor(kFpfhBins * x))); };
      h[bin((alpha + 1) / 2)] += 1;
      h[kFpfhBins + bin((phi + 1) / 2)] += 1;
      h[2 * kFpfhBins + bin((theta + std::numbers::pi) / (2 * std::numbers::pi))] += 1;
      ++valid;
    }
    for (double& x : h) x *= 100.0 / valid;
    return h;
  };

  std::array<double, kFpfhSize> expected = direct_spfh(0);
  for (std::size_t j = 1; j < 5; ++j) {
    const auto s = direct_spfh(j);
    for (std::size_t b = 0; b < kFpfhSize; ++b) expected[b] += s[b] / 4.0;  // weight 1/1, averaged over 4
  }
  for (std::size_t blk = 0; blk < 3; ++blk) {
    double sum = 0;
    for (std::size_t k = 0; k < kFpfhBins; ++k) sum += expected[blk * kFpfhBins + k];
    for (std::size_t k = 0; k < kFpfhBins; ++k) expected[blk * kFpfhBins + k] *= 100.0 / sum;
  }

  const std::vector<std::size_t> at = {0};
  const auto d = compute_fpfh(c, at, p)[0];
  for (std::size_t b = 0; b < kFpfhSize; ++b) EXPECT_NEAR(d[b], expected[b], 1e-12) << b;
  // All angular mass sits in the bin containing zero.
  EXPECT_NEAR(d[kFpfhBins / 2], 100.0, 1e-12);
  EXPECT_NEAR(d[2 * kFpfhBins + kFpfhBins / 2], 100.0, 1e-12);
}

TEST(FpfhProperty, RigidInvariance) {
  Rng rng(43);
  const PointCloud base = mreg::testing::wavy_cloud(8.0, 0.8);
  std::vector<std::size_t> at;
  for (std::size_t i = 0; i < base.size(); i += 7) at.push_back(i);
  FeatureParams p;
  p.fpfh_radius = 3.0;
  const auto ref = compute_fpfh(base, at, p);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = mreg::testing::random_transform(rng, FrameId::Bed, FrameId::Bed, 100.0);
    const auto moved = compute_fpfh(transformed(base, t), at, p);
    for (std::size_t k = 0; k < at.size(); ++k) EXPECT_LT(descriptor_distance(ref[k], moved[k]), 1e-6);
  }
}

TEST(Matching, IdenticalListsPairIdentically) {
  std::vector<FpfhDescriptor> d;
  for (int i = 0; i < 6; ++i) d.push_back(constant_descriptor(i * 3.0));
  FeatureParams p;
  p.tau = 1e-3;
  const auto c = match_descriptors(d, d, p);
  ASSERT_EQ(c.size(), 6u);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(c.pairs[k], std::make_pair(k, k));
}

TEST(Matching, GateExcludesFarDescriptor) {
  std::vector<FpfhDescriptor> bed = {constant_descriptor(0.0)};
  FpfhDescriptor far{};
  far[0] = 5.0;
  std::vector<FpfhDescriptor> spec = {constant_descriptor(0.0), far};
  FeatureParams p;
  p.tau = 1.0;
  p.mutual_check = false;
  const auto c = match_descriptors(bed, spec, p);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.pairs[0], std::make_pair(std::size_t{0}, std::size_t{0}));

  std::vector<FpfhDescriptor> only_far = {far};
  EXPECT_THROW(match_descriptors(bed, only_far, p), Error);
}

TEST(Matching, TieBreaksToLowerIndex) {
  const auto d = constant_descriptor(1.0);
  std::vector<FpfhDescriptor> bed = {d, d};
  std::vector<FpfhDescriptor> spec = {d};
  const auto c = match_descriptors(bed, spec, FeatureParams{});
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.pairs[0], std::make_pair(std::size_t{0}, std::size_t{0}));
}

TEST(Matching, AdaptiveGateRelaxesToPercentile) {
  Rng rng(44);
  std::vector<FpfhDescriptor> bed;
  std::vector<FpfhDescriptor> spec;
  for (int i = 0; i < 40; ++i) {
    FpfhDescriptor a;
    for (double& v : a) v = rng.uniform(0, 100);
    bed.push_back(a);
    FpfhDescriptor b = a;
    for (double& v : b) v += rng.uniform(-30, 30);
    spec.push_back(b);
  }
  FeatureParams p;
  p.tau = 1.0;
  const auto m = match_descriptors_adaptive(bed, spec, p);
  EXPECT_GT(m.tau_used, p.tau);
  for (std::size_t k = 0; k < m.correspondences.size(); ++k) {
    const auto [i, j] = m.correspondences.pairs[k];
    EXPECT_LT(descriptor_distance(bed[i], spec[j]), m.tau_used);
  }
}

TEST(MatchingProperty, MutualMatchesAreInjective) {
  Rng rng(45);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<FpfhDescriptor> bed(10 + rng.below(50));
    std::vector<FpfhDescriptor> spec(10 + rng.below(50));
    for (auto& d : bed) {
      for (double& v : d) v = double(rng.below(4));
    }
    for (auto& d : spec) {
      for (double& v : d) v = double(rng.below(4));
    }
    FeatureParams p;
    p.tau = 1e9;
    const auto c = match_descriptors(bed, spec, p);
    std::set<std::size_t> used_bed;
    std::set<std::size_t> used_spec;
    for (const auto& [i, j] : c.pairs) {
      EXPECT_TRUE(used_bed.insert(i).second);
      EXPECT_TRUE(used_spec.insert(j).second);
    }
  }
}
