#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mreg/geometry.hpp"

namespace mreg {

// Bumps are truncated beyond this many sigmas (contribution < 1e-13 of the amplitude).
inline constexpr double kBumpCutoff = 8.0;

struct Bump {
  double x = 0.0;
  double y = 0.0;
  double amplitude = 0.0;  // mm
  double sigma = 1.0;      // mm
};

// Heightfield z = skin(x, y) - cap(x, y) over a square patch, where skin is a
// sum of Gaussian bumps and cap is a spherical-cap profile of the given depth
// inside the cavity disk (zero outside). The cavity floor therefore carries
// the skin relief, which keeps the cut surface free of rotational symmetry.
struct PhantomSurface {
  double half_extent = 60.0;
  std::vector<Bump> bumps;
  double cavity_x = 0.0;
  double cavity_y = 0.0;
  double cavity_radius = 0.0;  // 0: no cavity
  double cavity_depth = 0.0;

  bool in_patch(double x, double y) const;
  bool in_cavity(double x, double y) const;
  double skin(double x, double y) const;
  double cap(double x, double y) const;
  double height(double x, double y) const { return skin(x, y) - cap(x, y); }
  // Unit normal of the post-resection surface, +z side.
  Vec3 normal(double x, double y) const;
  // Conservative bound on |grad height| used by the ray marcher.
  double slope_bound() const;
  // Height range over the patch, padded.
  std::pair<double, double> height_range() const;
};

struct PhantomParams {
  double specimen_size = 30.0;  // mm, cavity diameter, in [20, 40]
  double cavity_depth = 8.0;    // mm
  std::size_t bump_count = 30;
  double bump_radius = 20.0;  // mm, bump centres lie within this distance of the cavity centre
  double bump_sigma_min = 3.0;
  double bump_sigma_max = 6.0;
  double bump_amplitude_min = 3.0;  // mm, sign is random
  double bump_amplitude_max = 6.0;
  double bed_spacing = 1.0;       // mm, grid of the reference bed cloud
  double specimen_spacing = 0.5;  // mm, grid of the specimen scan

  void validate() const;
};

inline constexpr std::size_t kTargetCount = 19;
inline constexpr std::size_t kMarginCount = 6;

struct PhantomScene {
  PointCloud bed;             // frame Bed, post-resection surface with analytic normals
  PointCloud specimen;        // frame Specimen, cut surface with normals facing the open side
  RigidTransform gt_transform = RigidTransform::identity(FrameId::Specimen, FrameId::Bed);
  std::vector<Vec3> targets;  // frame Bed, on the bed surface
  std::vector<Vec3> margins;  // frame Specimen, on the cut boundary
  PhantomSurface surface;
  std::uint64_t seed = 0;

  std::vector<Vec3> targets_in_specimen() const;
};

PhantomScene generate_phantom(double specimen_size, double cavity_depth, std::size_t bump_count,
                              std::uint64_t seed);
PhantomScene generate_phantom(const PhantomParams& params, std::uint64_t seed);

struct Intrinsics {
  int width = 512;
  int height = 512;
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  static Intrinsics from_fov(int width, int height, double fov_deg);
  Vec3 ray(double u, double v) const;  // unit direction, camera frame (x right, y down, z forward)
};

struct DepthFrame {
  Intrinsics intrinsics;
  std::vector<double> range;  // row-major, mm along the ray, 0 = invalid
  RigidTransform pose = RigidTransform::identity(FrameId::Depth, FrameId::Bed);  // Bed <- camera

  double at(int u, int v) const { return range[static_cast<std::size_t>(v) * intrinsics.width + u]; }
};

struct NoiseModel {
  double sigma_range = 0.5;  // mm, Gaussian along the ray
  double quantization = 1.0; // mm, 0 disables
  double outlier_rate = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SensorParams {
  int width = 512;
  int height = 512;
  double fov_deg = 45.0;
  double distance = 300.0;  // mm from the cavity centre
  double arc_deg = 60.0;    // azimuth span of the camera arc
  std::size_t n_frames = 15;
};

// Ray-casts one frame. `stream` selects the noise stream for this frame.
DepthFrame render_frame(const PhantomSurface& surface, const Intrinsics& intrinsics, const RigidTransform& pose,
                        const NoiseModel& noise, std::uint64_t stream);

// Camera poses on a seeded arc above the cavity, looking at its centre.
std::vector<RigidTransform> camera_arc(const PhantomScene& scene, const SensorParams& sensor, std::uint64_t seed);

std::vector<DepthFrame> simulate_depth_frames(const PhantomScene& scene, std::size_t n_frames,
                                              const NoiseModel& noise, const SensorParams& sensor = {});

// Valid pixels mapped into the bed frame.
std::vector<Vec3> back_project(const DepthFrame& frame);

PointCloud fuse_frames(const std::vector<DepthFrame>& frames, double voxel, std::size_t outlier_k,
                       double outlier_ratio, std::size_t min_voxel_points = 1);

// Scene directory: bed.ply, specimen.ply, gt_transform.json, targets.csv, margins.csv,
// surface.json, frames/frame_NNN.{pgm,json}.
void save_scene(const std::filesystem::path& dir, const PhantomScene& scene,
                const std::vector<DepthFrame>& frames = {});
PhantomScene load_scene(const std::filesystem::path& dir);
std::vector<DepthFrame> load_frames(const std::filesystem::path& dir);

// 16-bit binary PGM; stored value = round(range / depth_scale).
inline constexpr double kDepthScale = 0.1;  // mm per count
void write_depth_pgm(const std::filesystem::path& path, const DepthFrame& frame);
void read_depth_pgm(const std::filesystem::path& path, DepthFrame& frame);

std::vector<Vec3> read_points_csv(const std::filesystem::path& path);
void write_points_csv(const std::filesystem::path& path, const std::vector<Vec3>& points);

}  // namespace mreg
