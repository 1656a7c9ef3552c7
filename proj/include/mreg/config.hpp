#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mreg/phantom.hpp"
#include "mreg/refine.hpp"

namespace mreg {

struct FusionParams {
  double voxel = 1.5;  // mm
  std::size_t outlier_k = 20;
  double outlier_ratio = 2.0;
  // Voxels hit fewer times are treated as sensor outliers.
  std::size_t min_voxel_points = 3;
};

// Every tunable of a run. Defaults are the reference parameter set.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  PhantomParams phantom;
  SensorParams sensor;
  NoiseModel noise;  // noise.seed is derived from the run seed, not stored
  FusionParams fusion;
  RegistrationParams registration = RegistrationParams::for_voxel(1.5);

  void validate() const;
};

// Flat dotted keys, e.g. "icp.max_corr_dist", in declaration order.
std::vector<std::string> config_keys();

nlohmann::json to_json(const RunConfig& cfg);
// Missing keys keep their defaults; unknown keys are a Config error.
RunConfig config_from_json(const nlohmann::json& j);

RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

// "key=value"; value is parsed as JSON when possible, else taken as a string.
void apply_override(RunConfig& cfg, std::string_view assignment);

}  // namespace mreg
