#include "mreg/config.hpp"

#include <set>

#include "mreg/io.hpp"

namespace mreg {

namespace {

template <class Cfg, class F>
void visit_fields(Cfg& c, F&& f) {
  f("seed", c.seed);
  f("out_dir", c.out_dir);

  f("phantom.specimen_size", c.phantom.specimen_size);
  f("phantom.cavity_depth", c.phantom.cavity_depth);
  f("phantom.bump_count", c.phantom.bump_count);
  f("phantom.bump_radius", c.phantom.bump_radius);
  f("phantom.bump_sigma_min", c.phantom.bump_sigma_min);
  f("phantom.bump_sigma_max", c.phantom.bump_sigma_max);
  f("phantom.bump_amplitude_min", c.phantom.bump_amplitude_min);
  f("phantom.bump_amplitude_max", c.phantom.bump_amplitude_max);
  f("phantom.bed_spacing", c.phantom.bed_spacing);
  f("phantom.specimen_spacing", c.phantom.specimen_spacing);

  f("sensor.width", c.sensor.width);
  f("sensor.height", c.sensor.height);
  f("sensor.fov_deg", c.sensor.fov_deg);
  f("sensor.distance", c.sensor.distance);
  f("sensor.arc_deg", c.sensor.arc_deg);
  f("sensor.n_frames", c.sensor.n_frames);

  f("noise.sigma_range", c.noise.sigma_range);
  f("noise.quantization", c.noise.quantization);
  f("noise.outlier_rate", c.noise.outlier_rate);

  f("fusion.voxel", c.fusion.voxel);
  f("fusion.outlier_k", c.fusion.outlier_k);
  f("fusion.outlier_ratio", c.fusion.outlier_ratio);
  f("fusion.min_voxel_points", c.fusion.min_voxel_points);

  auto& r = c.registration;
  f("registration.voxel", r.voxel);
  f("registration.downsample", r.downsample);
  f("registration.bed_viewpoint", r.bed_viewpoint);
  f("registration.spec_viewpoint", r.spec_viewpoint);

  f("features.normal_radius", r.features.normal_radius);
  f("features.fpfh_radius", r.features.fpfh_radius);
  f("features.n_keypoints", r.features.n_keypoints);
  f("features.tau", r.features.tau);
  f("features.mutual_check", r.features.mutual_check);
  f("features.curvature_k", r.features.curvature_k);
  f("features.min_pairs", r.features.min_pairs);
  f("features.relax_percentile", r.features.relax_percentile);

  f("coarse.eps", r.coarse.eps);
  f("coarse.gamma", r.coarse.gamma);
  f("coarse.gnc_mu_update", r.coarse.gnc_mu_update);
  f("coarse.max_gnc_iters", r.coarse.max_gnc_iters);
  f("coarse.min_inliers", r.coarse.min_inliers);
  f("coarse.max_tims", r.coarse.max_tims);

  f("roi.margin", r.roi.margin);

  f("icp.max_iters", r.icp.max_iters);
  f("icp.max_corr_dist", r.icp.max_corr_dist);
  f("icp.normal_angle_max", r.icp.normal_angle_max);
  f("icp.huber_delta", r.icp.huber_delta);
  f("icp.rel_change_tol", r.icp.rel_change_tol);
}

nlohmann::json::json_pointer pointer_of(std::string_view key) {
  std::string p = "/";
  for (char ch : key) p += ch == '.' ? '/' : ch;
  return nlohmann::json::json_pointer(p);
}

nlohmann::json encode(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
template <class T>
nlohmann::json encode(const T& v) {
  return v;
}

void decode(const nlohmann::json& j, Vec3& v) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected [x, y, z]");
  for (int k = 0; k < 3; ++k) v[k] = j.at(k).get<double>();
}
void decode(const nlohmann::json& j, bool& v) {
  if (!j.is_boolean()) throw std::invalid_argument("expected true/false");
  v = j.get<bool>();
}
void decode(const nlohmann::json& j, std::string& v) {
  if (!j.is_string()) throw std::invalid_argument("expected a string");
  v = j.get<std::string>();
}
void decode(const nlohmann::json& j, double& v) {
  if (!j.is_number()) throw std::invalid_argument("expected a number");
  v = j.get<double>();
}
template <class T>
  requires std::is_integral_v<T>
void decode(const nlohmann::json& j, T& v) {
  if (!j.is_number_integer() || (std::is_unsigned_v<T> && !j.is_number_unsigned())) {
    throw std::invalid_argument("expected a non-negative integer");
  }
  v = j.get<T>();
}

void collect_leaves(const nlohmann::json& j, const std::string& prefix, std::vector<std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      collect_leaves(*it, key, out);
    } else {
      out.push_back(key);
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  phantom.validate();
  noise.validate();
  if (sensor.width <= 0 || sensor.height <= 0 || !(sensor.fov_deg > 0.0 && sensor.fov_deg < 180.0) ||
      !(sensor.distance > 0.0) || sensor.n_frames == 0) {
    throw Error(ErrorCode::InvalidParams, "sensor needs positive size, fov in (0, 180), distance > 0, n_frames >= 1");
  }
  if (!(fusion.voxel > 0.0) || fusion.outlier_k == 0 || fusion.min_voxel_points == 0 || !(fusion.outlier_ratio > 0.0)) {
    throw Error(ErrorCode::InvalidParams, "fusion needs voxel > 0, outlier_k >= 1, outlier_ratio > 0");
  }
  if (!(registration.voxel > 0.0)) throw Error(ErrorCode::InvalidParams, "registration.voxel must be > 0");
  registration.features.validate();
  registration.coarse.validate();
  registration.roi.validate();
  registration.icp.validate();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  RunConfig cfg;
  visit_fields(cfg, [&](const char* key, auto&) { keys.emplace_back(key); });
  return keys;
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  visit_fields(cfg, [&](const char* key, const auto& v) { j[pointer_of(key)] = encode(v); });
  return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::Config, "config must be a JSON object");
  RunConfig cfg;
  std::set<std::string> known;
  visit_fields(cfg, [&](const char* key, auto& v) {
    known.insert(key);
    const auto ptr = pointer_of(key);
    if (!j.contains(ptr)) return;
    try {
      decode(j.at(ptr), v);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::Config, std::string("config key '") + key + "': " + e.what());
    }
  });
  std::vector<std::string> leaves;
  collect_leaves(j, "", leaves);
  for (const std::string& leaf : leaves) {
    if (!known.count(leaf)) throw Error(ErrorCode::Config, "unknown config key '" + leaf + "'");
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = read_json_file(path);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Parse) throw Error(ErrorCode::Config, e.what());
    throw;
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) { write_json_file(path, to_json(cfg)); }

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw Error(ErrorCode::Config, "override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  bool found = false;
  visit_fields(cfg, [&](const char* k, auto& v) {
    if (key != k) return;
    found = true;
    try {
      decode(value, v);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::Config, "override '" + key + "': " + e.what());
    }
  });
  if (!found) throw Error(ErrorCode::Config, "unknown config key '" + key + "'");
}

}  // namespace mreg
