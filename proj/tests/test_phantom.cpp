#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "mreg/features.hpp"
#include "mreg/phantom.hpp"
#include "support.hpp"

using namespace mreg;
namespace fs = std::filesystem;

namespace {

RigidTransform nadir_pose(double height) {
  Mat3 r;
  r.col(0) = Vec3(1, 0, 0);
  r.col(1) = Vec3(0, -1, 0);
  r.col(2) = Vec3(0, 0, -1);
  return RigidTransform(r, Vec3(0, 0, height), FrameId::Depth, FrameId::Bed);
}

NoiseModel noiseless() {
  NoiseModel n;
  n.sigma_range = 0.0;
  n.quantization = 0.0;
  n.outlier_rate = 0.0;
  return n;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mreg_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Phantom, SpecimenLiesOnBedSurface) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const PhantomScene s = generate_phantom(PhantomParams{}, seed);
    for (const Vec3& q : s.specimen.points) {
      const Vec3 p = s.gt_transform * q;
      EXPECT_NEAR(p.z(), s.surface.height(p.x(), p.y()), 1e-6);
      EXPECT_LE(std::hypot(p.x() - s.surface.cavity_x, p.y() - s.surface.cavity_y), s.surface.cavity_radius + 1e-9);
    }
    EXPECT_EQ(s.targets.size(), kTargetCount);
    EXPECT_EQ(s.margins.size(), kMarginCount);
    for (const Vec3& t : s.targets) EXPECT_NEAR(t.z(), s.surface.height(t.x(), t.y()), 1e-12);
    EXPECT_EQ(s.specimen.frame, FrameId::Specimen);
    EXPECT_EQ(s.bed.frame, FrameId::Bed);
  }
}

TEST(Phantom, SameSeedIsBitIdentical) {
  const PhantomScene a = generate_phantom(PhantomParams{}, 42);
  const PhantomScene b = generate_phantom(PhantomParams{}, 42);
  EXPECT_EQ(a.bed.points, b.bed.points);
  EXPECT_EQ(a.specimen.points, b.specimen.points);
  EXPECT_EQ(a.gt_transform.matrix(), b.gt_transform.matrix());
  EXPECT_EQ(a.targets, b.targets);
  const PhantomScene c = generate_phantom(PhantomParams{}, 43);
  EXPECT_NE(a.gt_transform.matrix(), c.gt_transform.matrix());
}

TEST(Phantom, NoBumpsGivesPlaneWithCavity) {
  PhantomParams p;
  p.bump_count = 0;
  const PhantomScene s = generate_phantom(p, 5);
  const PhantomSurface& f = s.surface;
  EXPECT_DOUBLE_EQ(f.height(f.cavity_x + 40.0, f.cavity_y), 0.0);
  EXPECT_NEAR(f.height(f.cavity_x, f.cavity_y), -p.cavity_depth, 1e-12);

  // Curvature concentrates on the rim: ring points score above flat and floor points.
  const auto scores = curvature_scores(s.bed, 30).scores;
  double rim = 0.0, flat = 0.0, floor = 0.0;
  int n_rim = 0, n_flat = 0, n_floor = 0;
  for (std::size_t i = 0; i < s.bed.size(); ++i) {
    const double r = std::hypot(s.bed.points[i].x() - f.cavity_x, s.bed.points[i].y() - f.cavity_y);
    if (std::abs(r - f.cavity_radius) < 1.0) {
      rim += scores[i];
      ++n_rim;
    } else if (r > f.cavity_radius + 5.0) {
      flat += scores[i];
      ++n_flat;
    } else if (r < f.cavity_radius - 5.0) {
      floor += scores[i];
      ++n_floor;
    }
  }
  EXPECT_GT(rim / n_rim, 10.0 * flat / n_flat + 1e-6);
  EXPECT_GT(rim / n_rim, 10.0 * floor / n_floor);
}

TEST(Phantom, ParameterValidation) {
  PhantomParams p;
  p.specimen_size = 50.0;
  EXPECT_THROW(generate_phantom(p, 1), Error);
  p = PhantomParams{};
  p.cavity_depth = 0.0;
  EXPECT_THROW(generate_phantom(p, 1), Error);
}

TEST(Sensor, NadirPlaneDepthIsSecant) {
  PhantomSurface plane;
  const double d = 100.0;
  const Intrinsics k = Intrinsics::from_fov(64, 48, 45.0);
  const DepthFrame f = render_frame(plane, k, nadir_pose(d), noiseless(), 0);
  int valid = 0;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const double cos_angle = k.ray(u, v).z();
      ASSERT_GT(f.at(u, v), 0.0);
      EXPECT_NEAR(f.at(u, v), d / cos_angle, 1e-6);
      ++valid;
    }
  }
  EXPECT_EQ(valid, 64 * 48);
}

TEST(Sensor, QuantizedDepthsAreWholeMillimetres) {
  PhantomSurface plane;
  NoiseModel n = noiseless();
  n.quantization = 1.0;
  const DepthFrame f = render_frame(plane, Intrinsics::from_fov(32, 32, 45.0), nadir_pose(87.3), n, 0);
  for (double r : f.range) EXPECT_EQ(r, std::round(r));
}

TEST(Sensor, OutlierFraction) {
  PhantomSurface plane;
  const Intrinsics k = Intrinsics::from_fov(400, 300, 45.0);
  const DepthFrame clean = render_frame(plane, k, nadir_pose(100.0), noiseless(), 0);
  NoiseModel n = noiseless();
  n.outlier_rate = 0.1;
  n.seed = 7;
  const DepthFrame noisy = render_frame(plane, k, nadir_pose(100.0), n, 0);
  std::size_t outliers = 0;
  for (std::size_t i = 0; i < clean.range.size(); ++i) outliers += noisy.range[i] != clean.range[i];
  const double frac = double(outliers) / clean.range.size();
  EXPECT_GE(clean.range.size(), 100000u);
  EXPECT_GE(frac, 0.08);
  EXPECT_LE(frac, 0.12);
}

TEST(Sensor, BackProjectionRoundTrip) {
  const PhantomScene s = generate_phantom(PhantomParams{}, 11);
  SensorParams sp;
  sp.width = 128;
  sp.height = 128;
  const auto frames = simulate_depth_frames(s, 3, noiseless(), sp);
  std::size_t total = 0;
  for (const DepthFrame& f : frames) {
    for (const Vec3& p : back_project(f)) {
      EXPECT_LT(std::abs(p.z() - s.surface.height(p.x(), p.y())), 1e-6);
      ++total;
    }
  }
  EXPECT_GT(total, 10000u);
}

TEST(Sensor, SeededFramesRepeat) {
  const PhantomScene s = generate_phantom(PhantomParams{}, 12);
  SensorParams sp;
  sp.width = 64;
  sp.height = 64;
  NoiseModel n;
  n.seed = 5;
  const auto a = simulate_depth_frames(s, 2, n, sp);
  const auto b = simulate_depth_frames(s, 2, n, sp);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].range, b[i].range);
    EXPECT_EQ(a[i].pose.matrix(), b[i].pose.matrix());
  }
}

TEST(Fusion, NoiselessPlaneIsCoplanar) {
  PhantomSurface plane;
  const DepthFrame f = render_frame(plane, Intrinsics::from_fov(64, 64, 45.0), nadir_pose(100.0), noiseless(), 0);
  const PointCloud fused = fuse_frames({f}, 1.0, 20, 2.0);
  ASSERT_GT(fused.size(), 100u);
  for (const Vec3& p : fused.points) EXPECT_LT(std::abs(p.z()), 1e-6);
  EXPECT_EQ(fused.frame, FrameId::Bed);
}

TEST(Fusion, TwoViewsNoWorseThanOne) {
  const PhantomScene s = generate_phantom(PhantomParams{}, 13);
  SensorParams sp;
  sp.width = 160;
  sp.height = 160;
  NoiseModel n;
  n.outlier_rate = 0.0;
  n.seed = 3;
  const auto frames = simulate_depth_frames(s, 2, n, sp);
  auto rms = [&](const PointCloud& c) {
    double sq = 0.0;
    for (const Vec3& p : c.points) {
      const double e = p.z() - s.surface.height(p.x(), p.y());
      sq += e * e;
    }
    return std::sqrt(sq / c.size());
  };
  const double one = rms(fuse_frames({frames[0]}, 1.5, 20, 2.0));
  const double two = rms(fuse_frames(frames, 1.5, 20, 2.0));
  EXPECT_LE(two, one + n.quantization / 2.0);
}

TEST(Fusion, CentroidsNearSurface) {
  const PhantomScene s = generate_phantom(PhantomParams{}, 14);
  SensorParams sp;
  sp.width = 160;
  sp.height = 160;
  const auto frames = simulate_depth_frames(s, 3, noiseless(), sp);
  const double voxel = 1.5;
  const PointCloud fused = fuse_frames(frames, voxel, 20, 2.0);
  for (const Vec3& p : fused.points) {
    EXPECT_LT(std::abs(p.z() - s.surface.height(p.x(), p.y())), voxel / std::sqrt(2.0));
  }
}

TEST(Fusion, AllInvalidIsEmptyFusion) {
  DepthFrame f;
  f.intrinsics = Intrinsics::from_fov(8, 8, 45.0);
  f.range.assign(64, 0.0);
  try {
    fuse_frames({f}, 1.0, 20, 2.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyFusion);
  }
  try {
    fuse_frames({}, 1.0, 20, 2.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyFusion);
  }
}

TEST(SceneFiles, SaveLoadRoundTrip) {
  const PhantomScene s = generate_phantom(PhantomParams{}, 15);
  SensorParams sp;
  sp.width = 32;
  sp.height = 24;
  NoiseModel n;
  n.seed = 2;
  const auto frames = simulate_depth_frames(s, 2, n, sp);
  const fs::path dir = temp_dir("scene");
  save_scene(dir, s, frames);
  for (const char* f : {"bed.ply", "specimen.ply", "gt_transform.json", "targets.csv", "margins.csv", "surface.json",
                        "frames/frame_000.pgm", "frames/frame_001.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const PhantomScene back = load_scene(dir);
  EXPECT_EQ(back.seed, s.seed);
  EXPECT_EQ(back.gt_transform.matrix(), s.gt_transform.matrix());
  EXPECT_EQ(back.targets, s.targets);
  EXPECT_EQ(back.margins, s.margins);
  EXPECT_EQ(back.specimen.points, s.specimen.points);
  EXPECT_EQ(back.surface.bumps.size(), s.surface.bumps.size());
  EXPECT_EQ(back.surface.height(1.0, 2.0), s.surface.height(1.0, 2.0));

  const auto loaded = load_frames(dir);
  ASSERT_EQ(loaded.size(), frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    EXPECT_EQ(loaded[i].pose.matrix(), frames[i].pose.matrix());
    for (std::size_t p = 0; p < frames[i].range.size(); ++p) {
      EXPECT_NEAR(loaded[i].range[p], frames[i].range[p], 0.05 + 1e-9);
    }
  }
  fs::remove_all(dir);
}

TEST(SceneFiles, MissingDirectoryIsIo) {
  try {
    load_scene("/nonexistent/scene");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}
