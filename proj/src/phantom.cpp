#include "mreg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

#include <Eigen/Geometry>

#include "mreg/io.hpp"
#include "mreg/random.hpp"

namespace mreg {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Surface
// ---------------------------------------------------------------------------

namespace {

double sphere_radius(double a, double h) { return (a * a + h * h) / (2.0 * h); }

}  // namespace

bool PhantomSurface::in_patch(double x, double y) const {
  return std::abs(x) <= half_extent && std::abs(y) <= half_extent;
}

bool PhantomSurface::in_cavity(double x, double y) const {
  if (cavity_radius <= 0.0) return false;
  const double dx = x - cavity_x;
  const double dy = y - cavity_y;
  return dx * dx + dy * dy < cavity_radius * cavity_radius;
}

double PhantomSurface::skin(double x, double y) const {
  double z = 0.0;
  for (const Bump& b : bumps) {
    const double dx = x - b.x;
    const double dy = y - b.y;
    const double d2 = dx * dx + dy * dy;
    if (d2 > kBumpCutoff * kBumpCutoff * b.sigma * b.sigma) continue;
    z += b.amplitude * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
  }
  return z;
}

double PhantomSurface::cap(double x, double y) const {
  if (!in_cavity(x, y)) return 0.0;
  const double rs = sphere_radius(cavity_radius, cavity_depth);
  const double dx = x - cavity_x;
  const double dy = y - cavity_y;
  return std::max(0.0, std::sqrt(rs * rs - dx * dx - dy * dy) - (rs - cavity_depth));
}

Vec3 PhantomSurface::normal(double x, double y) const {
  double gx = 0.0;
  double gy = 0.0;
  for (const Bump& b : bumps) {
    const double dx = x - b.x;
    const double dy = y - b.y;
    const double s2 = b.sigma * b.sigma;
    const double d2 = dx * dx + dy * dy;
    if (d2 > kBumpCutoff * kBumpCutoff * s2) continue;
    const double e = b.amplitude * std::exp(-d2 / (2.0 * s2));
    gx -= e * dx / s2;
    gy -= e * dy / s2;
  }
  if (in_cavity(x, y)) {
    const double rs = sphere_radius(cavity_radius, cavity_depth);
    const double dx = x - cavity_x;
    const double dy = y - cavity_y;
    const double root = std::sqrt(rs * rs - dx * dx - dy * dy);
    // d(cap)/dx = -dx / root; height = skin - cap
    gx += dx / root;
    gy += dy / root;
  }
  return Vec3(-gx, -gy, 1.0).normalized();
}

double PhantomSurface::slope_bound() const {
  double skin_max = 0.0;
  const double step = 0.5;
  PhantomSurface skin_only = *this;
  skin_only.cavity_radius = 0.0;
  for (double x = -half_extent; x <= half_extent; x += step) {
    for (double y = -half_extent; y <= half_extent; y += step) {
      const Vec3 n = skin_only.normal(x, y);
      skin_max = std::max(skin_max, std::hypot(n.x(), n.y()) / n.z());
    }
  }
  double cap_max = 0.0;
  if (cavity_radius > 0.0) {
    const double rs = sphere_radius(cavity_radius, cavity_depth);
    cap_max = cavity_radius / std::sqrt(rs * rs - cavity_radius * cavity_radius);
  }
  return 1.25 * skin_max + cap_max + 0.25;
}

std::pair<double, double> PhantomSurface::height_range() const {
  double lo = 0.0;
  double hi = 0.0;
  const double step = 0.5;
  for (double x = -half_extent; x <= half_extent; x += step) {
    for (double y = -half_extent; y <= half_extent; y += step) {
      const double s = skin(x, y);
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  }
  return {lo - cavity_depth - 1.0, hi + 1.0};
}

// ---------------------------------------------------------------------------
// Scene generation
// ---------------------------------------------------------------------------

void PhantomParams::validate() const {
  if (!(bump_radius >= 0.0) || !(bump_sigma_min > 0.0) || bump_sigma_max < bump_sigma_min ||
      !(bump_amplitude_min >= 0.0) || bump_amplitude_max < bump_amplitude_min) {
    throw Error(ErrorCode::InvalidParams, "bump ranges must be non-negative with min <= max");
  }
  if (!(specimen_size >= 20.0 && specimen_size <= 40.0)) {
    throw Error(ErrorCode::InvalidParams, "specimen_size must be in [20, 40] mm");
  }
  if (!(cavity_depth > 0.0) || cavity_depth > specimen_size / 2.0) {
    throw Error(ErrorCode::InvalidParams, "cavity_depth must be in (0, specimen_size/2]");
  }
  if (!(bed_spacing > 0.0) || !(specimen_spacing > 0.0)) {
    throw Error(ErrorCode::InvalidParams, "sampling spacings must be > 0");
  }
}

std::vector<Vec3> PhantomScene::targets_in_specimen() const {
  const RigidTransform inv = invert(gt_transform);
  std::vector<Vec3> out;
  out.reserve(targets.size());
  for (const Vec3& t : targets) out.push_back(inv.apply(t, FrameId::Bed));
  return out;
}

namespace {

Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

Vec3 surface_point(const PhantomSurface& s, double x, double y) { return Vec3(x, y, s.height(x, y)); }

}  // namespace

PhantomScene generate_phantom(double specimen_size, double cavity_depth, std::size_t bump_count,
                              std::uint64_t seed) {
  PhantomParams p;
  p.specimen_size = specimen_size;
  p.cavity_depth = cavity_depth;
  p.bump_count = bump_count;
  return generate_phantom(p, seed);
}

PhantomScene generate_phantom(const PhantomParams& params, std::uint64_t seed) {
  params.validate();
  Rng rng(derive_seed(seed, 10));
  PhantomScene scene;
  scene.seed = seed;
  PhantomSurface& surf = scene.surface;
  surf.cavity_radius = params.specimen_size / 2.0;
  surf.cavity_depth = params.cavity_depth;
  surf.cavity_x = rng.uniform(-15.0, 15.0);
  surf.cavity_y = rng.uniform(-15.0, 15.0);
  // Relief is concentrated around the cavity so the cut surface carries local detail.
  for (std::size_t k = 0; k < params.bump_count; ++k) {
    Bump b;
    const double r = rng.uniform(0.0, params.bump_radius);
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    b.x = surf.cavity_x + r * std::cos(a);
    b.y = surf.cavity_y + r * std::sin(a);
    b.amplitude = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(params.bump_amplitude_min, params.bump_amplitude_max);
    b.sigma = rng.uniform(params.bump_sigma_min, params.bump_sigma_max);
    surf.bumps.push_back(b);
  }

  // Reference bed cloud on a regular grid.
  scene.bed.frame = FrameId::Bed;
  scene.bed.normals.emplace();
  const double e = surf.half_extent;
  const auto n_bed = static_cast<int>(std::floor(2.0 * e / params.bed_spacing + 1e-9));
  for (int iy = 0; iy <= n_bed; ++iy) {
    for (int ix = 0; ix <= n_bed; ++ix) {
      const double x = -e + ix * params.bed_spacing;
      const double y = -e + iy * params.bed_spacing;
      scene.bed.points.push_back(surface_point(surf, x, y));
      scene.bed.normals->push_back(surf.normal(x, y));
    }
  }

  // Specimen: the cut surface (cavity floor), sampled in the bed frame first.
  const double a = surf.cavity_radius;
  PointCloud cut;
  cut.frame = FrameId::Bed;
  cut.normals.emplace();
  const auto n_cut = static_cast<int>(std::ceil(a / params.specimen_spacing));
  for (int iy = -n_cut; iy <= n_cut; ++iy) {
    for (int ix = -n_cut; ix <= n_cut; ++ix) {
      const double dx = ix * params.specimen_spacing;
      const double dy = iy * params.specimen_spacing;
      if (dx * dx + dy * dy > a * a) continue;
      const double x = surf.cavity_x + dx;
      const double y = surf.cavity_y + dy;
      cut.points.push_back(surface_point(surf, x, y));
      cut.normals->push_back(surf.normal(x, y));
    }
  }
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : cut.points) centroid += p;
  centroid /= static_cast<double>(cut.size());

  const Mat3 rot = random_rotation(rng);
  const Vec3 offset(rng.uniform(-20.0, 20.0), rng.uniform(-20.0, 20.0), rng.uniform(-20.0, 20.0));
  // p = rot q + (centroid - rot offset)  <=>  q = rot^T (p - centroid) + offset
  scene.gt_transform = RigidTransform(rot, centroid - rot * offset, FrameId::Specimen, FrameId::Bed);
  scene.specimen = transformed(cut, invert(scene.gt_transform));

  // 19 targets: centre, 6 at half radius, 6 on the rim, 6 just outside.
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  auto ring_point = [&](double r, double angle) {
    return surface_point(surf, surf.cavity_x + r * std::cos(angle), surf.cavity_y + r * std::sin(angle));
  };
  scene.targets.push_back(surface_point(surf, surf.cavity_x, surf.cavity_y));
  for (double r : {0.5 * a, a, a + 10.0}) {
    for (int k = 0; k < 6; ++k) {
      scene.targets.push_back(ring_point(r, phase + (k + 0.5 * (r == a)) * std::numbers::pi / 3.0));
    }
  }
  // 6 margins evenly spaced on the cut boundary.
  const RigidTransform to_spec = invert(scene.gt_transform);
  for (int k = 0; k < 6; ++k) {
    scene.margins.push_back(to_spec * ring_point(a, phase + (k + 0.25) * std::numbers::pi / 3.0));
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Depth sensor
// ---------------------------------------------------------------------------

void NoiseModel::validate() const {
  if (!(sigma_range >= 0.0) || !(quantization >= 0.0)) {
    throw Error(ErrorCode::InvalidParams, "noise sigma and quantization must be >= 0");
  }
  if (!(outlier_rate >= 0.0 && outlier_rate < 0.5)) {
    throw Error(ErrorCode::InvalidParams, "outlier_rate must be in [0, 0.5)");
  }
}

Intrinsics Intrinsics::from_fov(int width, int height, double fov_deg) {
  Intrinsics k;
  k.width = width;
  k.height = height;
  k.fx = 0.5 * width / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
  k.fy = k.fx;
  k.cx = 0.5 * (width - 1);
  k.cy = 0.5 * (height - 1);
  return k;
}

Vec3 Intrinsics::ray(double u, double v) const { return Vec3((u - cx) / fx, (v - cy) / fy, 1.0).normalized(); }

namespace {

class RayCaster {
 public:
  explicit RayCaster(const PhantomSurface& surface)
      : surf_(surface), slope_(surface.slope_bound()), range_(surface.height_range()) {}

  // Distance along the unit ray to the first crossing of the heightfield top side.
  std::optional<double> cast(const Vec3& o, const Vec3& d) const {
    double s0 = 0.0;
    double s1 = std::numeric_limits<double>::infinity();
    const double lo[3] = {-surf_.half_extent, -surf_.half_extent, range_.first};
    const double hi[3] = {surf_.half_extent, surf_.half_extent, range_.second};
    for (int k = 0; k < 3; ++k) {
      if (d[k] == 0.0) {
        if (o[k] < lo[k] || o[k] > hi[k]) return std::nullopt;
        continue;
      }
      double a = (lo[k] - o[k]) / d[k];
      double b = (hi[k] - o[k]) / d[k];
      if (a > b) std::swap(a, b);
      s0 = std::max(s0, a);
      s1 = std::min(s1, b);
    }
    if (s0 > s1) return std::nullopt;

    auto gap = [&](double s) {
      const Vec3 p = o + s * d;
      return p.z() - surf_.height(p.x(), p.y());
    };
    // A ray entering below the surface hits the patch side wall: not a surface sample.
    double g = gap(s0);
    if (g <= 0.0) return std::nullopt;
    const double rate = std::abs(d.z()) + slope_ * std::hypot(d.x(), d.y());
    double s = s0;
    double s_prev = s0;
    double g_prev = g;
    while (true) {
      s_prev = s;
      g_prev = g;
      s += std::max(g / rate, 0.02);
      if (s > s1) return std::nullopt;
      g = gap(s);
      if (g <= 0.0) break;
    }
    // Illinois false position on [s_prev, s].
    double a = s_prev, fa = g_prev, b = s, fb = g;
    int side = 0;
    for (int it = 0; it < 100 && b - a > 1e-12; ++it) {
      const double c = (a * fb - b * fa) / (fb - fa);
      const double fc = gap(c);
      if (fc == 0.0) return c;
      if (fc > 0.0) {
        a = c;
        fa = fc;
        if (side == -1) fb *= 0.5;
        side = -1;
      } else {
        b = c;
        fb = fc;
        if (side == 1) fa *= 0.5;
        side = 1;
      }
      if (std::abs(fc) < 1e-11) return c;
    }
    return 0.5 * (a + b);
  }

 private:
  const PhantomSurface& surf_;
  double slope_;
  std::pair<double, double> range_;
};

}  // namespace

DepthFrame render_frame(const PhantomSurface& surface, const Intrinsics& intrinsics, const RigidTransform& pose,
                        const NoiseModel& noise, std::uint64_t stream) {
  noise.validate();
  if (pose.source() != FrameId::Depth || pose.target() != FrameId::Bed) {
    throw Error(ErrorCode::FrameMismatch, "camera pose must map Depth into Bed");
  }
  const RayCaster caster(surface);
  Rng rng(derive_seed(noise.seed, stream));
  DepthFrame frame;
  frame.intrinsics = intrinsics;
  frame.pose = pose;
  frame.range.assign(static_cast<std::size_t>(intrinsics.width) * intrinsics.height, 0.0);
  const Vec3 origin = pose.translation();
  for (int v = 0; v < intrinsics.height; ++v) {
    for (int u = 0; u < intrinsics.width; ++u) {
      const auto hit = caster.cast(origin, pose.rotate(intrinsics.ray(u, v)));
      if (!hit) continue;
      double r = *hit;
      if (noise.outlier_rate > 0.0 && rng.uniform() < noise.outlier_rate) {
        r = rng.uniform(0.5 * r, 1.5 * r);
      } else if (noise.sigma_range > 0.0) {
        r += noise.sigma_range * rng.normal();
      }
      if (noise.quantization > 0.0) r = std::round(r / noise.quantization) * noise.quantization;
      frame.range[static_cast<std::size_t>(v) * intrinsics.width + u] = std::max(r, 0.0);
    }
  }
  return frame;
}

std::vector<RigidTransform> camera_arc(const PhantomScene& scene, const SensorParams& sensor, std::uint64_t seed) {
  Rng rng(seed);
  const PhantomSurface& s = scene.surface;
  const Vec3 look(s.cavity_x, s.cavity_y, s.skin(s.cavity_x, s.cavity_y) - 0.5 * s.cavity_depth);
  const double az0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double tilt = rng.uniform(10.0, 20.0) * std::numbers::pi / 180.0;
  const double arc = sensor.arc_deg * std::numbers::pi / 180.0;
  std::vector<RigidTransform> poses;
  for (std::size_t i = 0; i < sensor.n_frames; ++i) {
    const double frac = sensor.n_frames > 1 ? static_cast<double>(i) / (sensor.n_frames - 1) - 0.5 : 0.0;
    const double az = az0 + arc * frac;
    const Vec3 pos = look + sensor.distance * Vec3(std::sin(tilt) * std::cos(az), std::sin(tilt) * std::sin(az),
                                                   std::cos(tilt));
    const Vec3 z = (look - pos).normalized();
    const Vec3 x = z.cross(Vec3::UnitY()).normalized();
    const Vec3 y = z.cross(x);
    Mat3 r;
    r.col(0) = x;
    r.col(1) = y;
    r.col(2) = z;
    poses.emplace_back(r, pos, FrameId::Depth, FrameId::Bed);
  }
  return poses;
}

std::vector<DepthFrame> simulate_depth_frames(const PhantomScene& scene, std::size_t n_frames,
                                              const NoiseModel& noise, const SensorParams& sensor) {
  if (n_frames == 0) throw Error(ErrorCode::InvalidParams, "n_frames must be >= 1");
  SensorParams sp = sensor;
  sp.n_frames = n_frames;
  const auto poses = camera_arc(scene, sp, derive_seed(noise.seed, 1000));
  const Intrinsics k = Intrinsics::from_fov(sp.width, sp.height, sp.fov_deg);
  std::vector<DepthFrame> frames;
  frames.reserve(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) frames.push_back(render_frame(scene.surface, k, poses[i], noise, i));
  return frames;
}

std::vector<Vec3> back_project(const DepthFrame& frame) {
  std::vector<Vec3> out;
  const Intrinsics& k = frame.intrinsics;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const double r = frame.at(u, v);
      if (r > 0.0) out.push_back(frame.pose * (r * k.ray(u, v)));
    }
  }
  return out;
}

PointCloud fuse_frames(const std::vector<DepthFrame>& frames, double voxel, std::size_t outlier_k,
                       double outlier_ratio, std::size_t min_voxel_points) {
  if (frames.empty()) throw Error(ErrorCode::EmptyFusion, "no depth frames to fuse");
  PointCloud raw;
  raw.frame = FrameId::Bed;
  for (const DepthFrame& f : frames) {
    if (f.pose.target() != FrameId::Bed) throw Error(ErrorCode::FrameMismatch, "frame pose must target Bed");
    auto pts = back_project(f);
    raw.points.insert(raw.points.end(), pts.begin(), pts.end());
  }
  if (raw.empty()) throw Error(ErrorCode::EmptyFusion, "every depth pixel is invalid");
  PointCloud fused = voxel_downsample(raw, voxel, min_voxel_points);
  if (fused.empty()) throw Error(ErrorCode::EmptyFusion, "no voxel reached min_voxel_points");
  if (fused.size() > outlier_k) fused = remove_statistical_outliers(fused, outlier_k, outlier_ratio);
  return fused;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

void write_depth_pgm(const fs::path& path, const DepthFrame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  const Intrinsics& k = frame.intrinsics;
  out << "P5\n" << k.width << ' ' << k.height << "\n65535\n";
  std::string bytes;
  bytes.reserve(frame.range.size() * 2);
  for (double r : frame.range) {
    const auto v = static_cast<std::uint16_t>(std::clamp(std::round(r / kDepthScale), 0.0, 65535.0));
    bytes.push_back(static_cast<char>(v >> 8));
    bytes.push_back(static_cast<char>(v & 0xFF));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

void read_depth_pgm(const fs::path& path, DepthFrame& frame) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  if (magic != "P5" || maxval != 65535 || w <= 0 || h <= 0) {
    throw Error(ErrorCode::Parse, path.string() + ": expected 16-bit binary PGM");
  }
  if (w != frame.intrinsics.width || h != frame.intrinsics.height) {
    throw Error(ErrorCode::Parse, path.string() + ": size disagrees with intrinsics");
  }
  std::string bytes(static_cast<std::size_t>(w) * h * 2, '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw Error(ErrorCode::Parse, path.string() + ": truncated pixel data");
  frame.range.resize(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < frame.range.size(); ++i) {
    const auto hi = static_cast<unsigned char>(bytes[2 * i]);
    const auto lo = static_cast<unsigned char>(bytes[2 * i + 1]);
    frame.range[i] = static_cast<double>((hi << 8) | lo) * kDepthScale;
  }
}

void write_points_csv(const fs::path& path, const std::vector<Vec3>& points) {
  std::string text = "x,y,z\n";
  for (const Vec3& p : points) {
    text += format_double(p.x()) + ',' + format_double(p.y()) + ',' + format_double(p.z()) + '\n';
  }
  write_text_file(path, text);
}

std::vector<Vec3> read_points_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);  // header
  std::vector<Vec3> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x() >> p.y() >> p.z())) throw Error(ErrorCode::Parse, path.string() + ": bad row");
    out.push_back(p);
  }
  return out;
}

namespace {

nlohmann::json surface_to_json(const PhantomSurface& s, std::uint64_t seed) {
  nlohmann::json j;
  j["seed"] = seed;
  j["half_extent"] = s.half_extent;
  j["cavity"] = {{"x", s.cavity_x}, {"y", s.cavity_y}, {"radius", s.cavity_radius}, {"depth", s.cavity_depth}};
  j["bumps"] = nlohmann::json::array();
  for (const Bump& b : s.bumps) {
    j["bumps"].push_back({{"x", b.x}, {"y", b.y}, {"amplitude", b.amplitude}, {"sigma", b.sigma}});
  }
  return j;
}

PhantomSurface surface_from_json(const nlohmann::json& j) {
  PhantomSurface s;
  s.half_extent = j.at("half_extent").get<double>();
  const auto& c = j.at("cavity");
  s.cavity_x = c.at("x").get<double>();
  s.cavity_y = c.at("y").get<double>();
  s.cavity_radius = c.at("radius").get<double>();
  s.cavity_depth = c.at("depth").get<double>();
  for (const auto& b : j.at("bumps")) {
    s.bumps.push_back({b.at("x").get<double>(), b.at("y").get<double>(), b.at("amplitude").get<double>(),
                       b.at("sigma").get<double>()});
  }
  return s;
}

std::string frame_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%03zu", i);
  return buf;
}

}  // namespace

void save_scene(const fs::path& dir, const PhantomScene& scene, const std::vector<DepthFrame>& frames) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create '" + dir.string() + "': " + ec.message());
  write_ply(dir / "bed.ply", scene.bed);
  write_ply(dir / "specimen.ply", scene.specimen);
  write_json_file(dir / "gt_transform.json", to_json(scene.gt_transform));
  write_points_csv(dir / "targets.csv", scene.targets);
  write_points_csv(dir / "margins.csv", scene.margins);
  write_json_file(dir / "surface.json", surface_to_json(scene.surface, scene.seed));
  if (frames.empty()) return;
  fs::create_directories(dir / "frames", ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create frames directory: " + ec.message());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const DepthFrame& f = frames[i];
    write_depth_pgm(dir / "frames" / (frame_stem(i) + ".pgm"), f);
    const Intrinsics& k = f.intrinsics;
    nlohmann::json meta;
    meta["pose"] = to_json(f.pose);
    meta["intrinsics"] = {{"width", k.width}, {"height", k.height}, {"fx", k.fx},
                          {"fy", k.fy},       {"cx", k.cx},         {"cy", k.cy}};
    meta["depth_scale_mm"] = kDepthScale;
    write_json_file(dir / "frames" / (frame_stem(i) + ".json"), meta);
  }
}

PhantomScene load_scene(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "scene directory '" + dir.string() + "' not found");
  PhantomScene scene;
  scene.bed = read_ply(dir / "bed.ply");
  scene.specimen = read_ply(dir / "specimen.ply");
  scene.gt_transform = transform_from_json(read_json_file(dir / "gt_transform.json"));
  scene.targets = read_points_csv(dir / "targets.csv");
  scene.margins = read_points_csv(dir / "margins.csv");
  try {
    const auto surf = read_json_file(dir / "surface.json");
    scene.surface = surface_from_json(surf);
    scene.seed = surf.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, "surface.json: " + std::string(e.what()));
  }
  return scene;
}

std::vector<DepthFrame> load_frames(const fs::path& dir) {
  const fs::path frames_dir = dir / "frames";
  std::vector<DepthFrame> frames;
  if (!fs::is_directory(frames_dir)) return frames;
  for (std::size_t i = 0;; ++i) {
    const fs::path meta_path = frames_dir / (frame_stem(i) + ".json");
    if (!fs::exists(meta_path)) break;
    const auto meta = read_json_file(meta_path);
    DepthFrame f;
    try {
      const auto& k = meta.at("intrinsics");
      f.intrinsics.width = k.at("width").get<int>();
      f.intrinsics.height = k.at("height").get<int>();
      f.intrinsics.fx = k.at("fx").get<double>();
      f.intrinsics.fy = k.at("fy").get<double>();
      f.intrinsics.cx = k.at("cx").get<double>();
      f.intrinsics.cy = k.at("cy").get<double>();
      if (meta.at("depth_scale_mm").get<double>() != kDepthScale) {
        throw Error(ErrorCode::Parse, meta_path.string() + ": unsupported depth scale");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Parse, meta_path.string() + ": " + e.what());
    }
    f.pose = transform_from_json(meta.at("pose"));
    read_depth_pgm(frames_dir / (frame_stem(i) + ".pgm"), f);
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace mreg
