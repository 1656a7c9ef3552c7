// Hand-rolled generators shared by the property tests.
#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Geometry>

#include "mreg/features.hpp"
#include "mreg/geometry.hpp"
#include "mreg/random.hpp"

namespace mreg::testing {

inline Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

inline Vec3 random_vec(Rng& rng, double half) {
  return {rng.uniform(-half, half), rng.uniform(-half, half), rng.uniform(-half, half)};
}

inline RigidTransform random_transform(Rng& rng, FrameId src, FrameId dst, double half = 50.0) {
  return RigidTransform(random_rotation(rng), random_vec(rng, half), src, dst);
}

inline Vec3 random_unit(Rng& rng) {
  Vec3 v(rng.normal(), rng.normal(), rng.normal());
  return v.normalized();
}

inline PointCloud random_cloud(Rng& rng, std::size_t n, double half, FrameId frame = FrameId::Bed) {
  PointCloud c;
  c.frame = frame;
  for (std::size_t i = 0; i < n; ++i) c.points.push_back(random_vec(rng, half));
  return c;
}

inline PointCloud plane_grid(int n, double spacing, FrameId frame = FrameId::Bed) {
  PointCloud c;
  c.frame = frame;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) c.points.emplace_back(i * spacing, j * spacing, 0.0);
  }
  return c;
}

// Fibonacci sphere.
inline PointCloud sphere_points(std::size_t n, double radius, FrameId frame = FrameId::Bed) {
  PointCloud c;
  c.frame = frame;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(1.0 - z * z);
    const double a = golden * i;
    c.points.emplace_back(radius * r * std::cos(a), radius * r * std::sin(a), radius * z);
  }
  return c;
}

// Smooth wavy heightfield with analytic normals; rich enough for FPFH and ICP.
inline double wavy(double x, double y) {
  return 4.0 * std::sin(0.15 * x) * std::cos(0.11 * y) + 2.5 * std::exp(-((x - 5) * (x - 5) + y * y) / 40.0) +
         0.02 * x * y;
}

inline Vec3 wavy_normal(double x, double y) {
  const double h = 1e-5;
  const double dx = (wavy(x + h, y) - wavy(x - h, y)) / (2 * h);
  const double dy = (wavy(x, y + h) - wavy(x, y - h)) / (2 * h);
  return Vec3(-dx, -dy, 1.0).normalized();
}

inline PointCloud wavy_cloud(double half, double spacing, FrameId frame = FrameId::Bed) {
  PointCloud c;
  c.frame = frame;
  std::vector<Vec3> normals;
  const int n = static_cast<int>(std::round(2 * half / spacing));
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      const double x = -half + i * spacing;
      const double y = -half + j * spacing;
      c.points.emplace_back(x, y, wavy(x, y));
      normals.push_back(wavy_normal(x, y));
    }
  }
  c.normals = normals;
  return c;
}

// Correspondences bed_i = R spec_i + t (+ noise) with a fraction replaced by uniform outliers.
struct SyntheticMatches {
  PointCloud bed;
  PointCloud spec;
  CorrespondenceSet corr;
  std::vector<bool> inlier;
  RigidTransform truth = RigidTransform::identity(FrameId::Specimen, FrameId::Bed);
};

inline SyntheticMatches synthetic_matches(Rng& rng, std::size_t n, double outlier_fraction, double noise,
                                          double half = 50.0) {
  SyntheticMatches m;
  m.bed.frame = FrameId::Bed;
  m.spec.frame = FrameId::Specimen;
  m.truth = random_transform(rng, FrameId::Specimen, FrameId::Bed, 100.0);
  const std::size_t n_out = static_cast<std::size_t>(std::round(outlier_fraction * n));
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 q = random_vec(rng, half);
    m.spec.points.push_back(q);
    const bool in = i >= n_out;
    Vec3 p = m.truth * q + Vec3(rng.normal(), rng.normal(), rng.normal()) * noise;
    if (!in) p = m.truth * random_vec(rng, half);
    m.bed.points.push_back(p);
    m.inlier.push_back(in);
    m.corr.push(i, i);
  }
  return m;
}

// Upper tail of the chi-square distribution, via the regularized incomplete gamma.
inline double chi_square_sf(double x, double dof) {
  const double a = 0.5 * dof;
  const double z = 0.5 * x;
  if (z <= 0.0) return 1.0;
  const double log_front = a * std::log(z) - z - std::lgamma(a);
  if (z < a + 1.0) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 1000; ++n) {
      term *= z / (a + n);
      sum += term;
      if (term < sum * 1e-16) break;
    }
    return 1.0 - sum * std::exp(log_front);
  }
  // Lentz continued fraction for Q.
  double b = z + 1.0 - a;
  double c = 1.0 / 1e-300;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(log_front) * h;
}

}  // namespace mreg::testing
