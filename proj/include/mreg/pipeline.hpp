#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mreg/config.hpp"
#include "mreg/eval.hpp"
#include "mreg/phantom.hpp"
#include "mreg/refine.hpp"

namespace mreg {

// Per-seed random streams.
std::uint64_t noise_seed_for(std::uint64_t seed);
std::uint64_t registration_seed_for(std::uint64_t seed);

std::vector<DepthFrame> acquire_frames(const RunConfig& cfg, const PhantomScene& scene, std::uint64_t seed);
PointCloud fuse_bed(const RunConfig& cfg, const std::vector<DepthFrame>& frames);

RegistrationOutput register_with_config(const RunConfig& cfg, const PointCloud& bed, const PointCloud& spec,
                                        std::uint64_t seed);

// Result file: final transform, both stage transforms and their diagnostics.
nlohmann::json result_to_json(const RegistrationOutput& out);

struct StageTransforms {
  RigidTransform coarse;
  RigidTransform fine;
};
StageTransforms stage_transforms_from_json(const nlohmann::json& j);

// TRE (19 targets) and margin errors for both stages.
std::vector<MetricRow> evaluate_scene(const std::string& label, const StageTransforms& t, const PhantomScene& scene);

struct Report {
  std::string table_csv;    // fine-stage TRE per label + pooled "All" row
  nlohmann::json stats;     // per-stage summaries and coarse-vs-fine tests
};
// Labels keep first-appearance order.
Report build_report(const std::vector<MetricRow>& rows);

struct SeedRange {
  std::uint64_t first = 1;
  std::uint64_t last = 20;
};
// "N" or "A..B".
SeedRange parse_seed_range(const std::string& text);

// phantom -> acquire -> register -> evaluate for each seed, then report.
// Writes DIR/seed_NNN/..., DIR/metrics.csv, DIR/table.csv, DIR/stats.json, DIR/config.json;
// wall-clock timings go to DIR/run.log only.
Report run_pipeline(const RunConfig& cfg, SeedRange seeds, const std::filesystem::path& out_dir);

}  // namespace mreg
