#include "mreg/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>

#include "mreg/io.hpp"
#include "mreg/random.hpp"

namespace mreg {

namespace fs = std::filesystem;

std::uint64_t noise_seed_for(std::uint64_t seed) { return derive_seed(seed, 2); }
std::uint64_t registration_seed_for(std::uint64_t seed) { return derive_seed(seed, 3); }

std::vector<DepthFrame> acquire_frames(const RunConfig& cfg, const PhantomScene& scene, std::uint64_t seed) {
  NoiseModel noise = cfg.noise;
  noise.seed = noise_seed_for(seed);
  return simulate_depth_frames(scene, cfg.sensor.n_frames, noise, cfg.sensor);
}

PointCloud fuse_bed(const RunConfig& cfg, const std::vector<DepthFrame>& frames) {
  return fuse_frames(frames, cfg.fusion.voxel, cfg.fusion.outlier_k, cfg.fusion.outlier_ratio,
                     cfg.fusion.min_voxel_points);
}

RegistrationOutput register_with_config(const RunConfig& cfg, const PointCloud& bed, const PointCloud& spec,
                                        std::uint64_t seed) {
  cfg.validate();
  return register_clouds(bed, spec, cfg.registration, seed);
}

namespace {

nlohmann::json stage_json(const RegistrationResult& r) {
  return {{"transform", to_json(r.transform)},
          {"rmse_inliers", r.rmse_inliers},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"inliers", r.inlier_pairs.size()}};
}

std::string label_for(std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "seed_%03llu", static_cast<unsigned long long>(seed));
  return buf;
}

}  // namespace

nlohmann::json result_to_json(const RegistrationOutput& out) {
  const CoarseDiagnostics& d = out.coarse_diagnostics;
  nlohmann::json coarse = stage_json(out.coarse);
  coarse["diagnostics"] = {{"bed_keypoints", d.bed_keypoints},
                           {"spec_keypoints", d.spec_keypoints},
                           {"correspondences", d.correspondences},
                           {"tau_used", d.tau_used},
                           {"tims", d.tims},
                           {"tims_after_pruning", d.tims_after_pruning},
                           {"rotation_inliers", d.rotation_inliers},
                           {"translation_inliers", d.translation_inliers}};
  nlohmann::json fine = stage_json(out.fine);
  fine["roi"] = {{"points", out.roi_points},
                 {"min", {out.roi_box.min.x(), out.roi_box.min.y(), out.roi_box.min.z()}},
                 {"max", {out.roi_box.max.x(), out.roi_box.max.y(), out.roi_box.max.z()}}};
  return {{"transform", to_json(out.transform())}, {"coarse", coarse}, {"fine", fine}};
}

StageTransforms stage_transforms_from_json(const nlohmann::json& j) {
  try {
    return {transform_from_json(j.at("coarse").at("transform")), transform_from_json(j.at("fine").at("transform"))};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("result JSON: ") + e.what());
  }
}

std::vector<MetricRow> evaluate_scene(const std::string& label, const StageTransforms& t, const PhantomScene& scene) {
  if (scene.targets.size() != kTargetCount || scene.margins.size() != kMarginCount) {
    throw Error(ErrorCode::Parse, "scene must carry 19 targets and 6 margins");
  }
  const std::vector<Vec3> targets_s = scene.targets_in_specimen();
  std::vector<Vec3> margins_gt;
  for (const Vec3& m : scene.margins) margins_gt.push_back(scene.gt_transform * m);

  std::vector<MetricRow> rows;
  for (const auto& [stage, tf] : {std::pair{"coarse", &t.coarse}, std::pair{"fine", &t.fine}}) {
    const ErrorSample tre = target_registration_error(*tf, scene.gt_transform, targets_s);
    for (std::size_t i = 0; i < tre.values.size(); ++i) rows.push_back({label, "tre", stage, i, tre.values[i]});
    std::vector<Vec3> margins_est;
    for (const Vec3& m : scene.margins) margins_est.push_back(*tf * m);
    const ErrorSample mle = margin_localization_error(margins_est, margins_gt);
    for (std::size_t i = 0; i < mle.values.size(); ++i) rows.push_back({label, "margin", stage, i, mle.values[i]});
  }
  return rows;
}

Report build_report(const std::vector<MetricRow>& rows) {
  if (rows.empty()) throw Error(ErrorCode::EmptySample, "no metric rows to report");
  std::vector<std::string> labels;
  std::map<std::string, std::map<std::string, std::vector<double>>> by_label;  // label -> metric/stage -> values
  std::map<std::string, std::vector<double>> pooled;
  for (const MetricRow& r : rows) {
    if (!by_label.count(r.label)) labels.push_back(r.label);
    const std::string key = r.metric + "/" + r.stage;
    by_label[r.label][key].push_back(r.error);
    pooled[key].push_back(r.error);
  }

  Report report;
  std::vector<std::pair<std::string, SummaryStats>> table;
  nlohmann::json per_label = nlohmann::json::array();
  std::vector<double> med_coarse;
  std::vector<double> med_fine;
  for (const std::string& label : labels) {
    nlohmann::json entry = {{"label", label}};
    for (const auto& [key, values] : by_label[label]) entry[key] = to_json(summarize({values, label}));
    per_label.push_back(entry);
    const auto& m = by_label[label];
    if (m.count("tre/fine")) table.emplace_back(label, summarize({m.at("tre/fine"), label}));
    if (m.count("tre/fine") && m.count("tre/coarse")) {
      med_coarse.push_back(summarize({m.at("tre/coarse"), label}).median);
      med_fine.push_back(summarize({m.at("tre/fine"), label}).median);
    }
  }
  if (pooled.count("tre/fine")) table.emplace_back("All", summarize({pooled.at("tre/fine"), "All"}));
  report.table_csv = summary_table_csv(table);

  nlohmann::json all = nlohmann::json::object();
  for (const auto& [key, values] : pooled) all[key] = to_json(summarize({values, "All"}));

  // Coarse vs fine on per-label TRE medians.
  nlohmann::json tests = nlohmann::json::object();
  auto run_test = [&](const char* name, auto&& fn) {
    try {
      tests[name] = to_json(fn(med_coarse, med_fine));
    } catch (const Error& e) {
      tests[name] = {{"error", to_string(e.code())}, {"message", e.what()}};
    }
  };
  run_test("paired_t", paired_t_test);
  run_test("wilcoxon_exact", wilcoxon_signed_rank_exact);

  report.stats = {{"labels", per_label}, {"all", all}, {"tre_median_coarse_vs_fine", tests}};
  return report;
}

SeedRange parse_seed_range(const std::string& text) {
  SeedRange r;
  try {
    const auto dots = text.find("..");
    std::size_t used = 0;
    if (dots == std::string::npos) {
      r.first = r.last = std::stoull(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing characters");
    } else {
      const std::string a = text.substr(0, dots);
      const std::string b = text.substr(dots + 2);
      r.first = std::stoull(a, &used);
      if (used != a.size()) throw std::invalid_argument("trailing characters");
      r.last = std::stoull(b, &used);
      if (used != b.size()) throw std::invalid_argument("trailing characters");
    }
  } catch (const std::exception&) {
    throw Error(ErrorCode::Config, "seed range '" + text + "' is not N or A..B");
  }
  if (r.last < r.first) throw Error(ErrorCode::Config, "seed range '" + text + "' is empty");
  return r;
}

Report run_pipeline(const RunConfig& cfg, SeedRange seeds, const fs::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create '" + out_dir.string() + "': " + ec.message());
  save_config(out_dir / "config.json", cfg);

  std::ofstream log(out_dir / "run.log");
  std::vector<MetricRow> all_rows;
  nlohmann::json failures = nlohmann::json::array();
  for (std::uint64_t seed = seeds.first; seed <= seeds.last; ++seed) {
    const auto start = std::chrono::steady_clock::now();
    const std::string label = label_for(seed);
    const fs::path dir = out_dir / label;
    try {
      const PhantomScene scene = generate_phantom(cfg.phantom, seed);
      save_scene(dir / "scene", scene);
      const PointCloud bed = fuse_bed(cfg, acquire_frames(cfg, scene, seed));
      write_ply(dir / "bed_fused.ply", bed);
      const RegistrationOutput out = register_with_config(cfg, bed, scene.specimen, registration_seed_for(seed));
      write_json_file(dir / "result.json", result_to_json(out));
      auto rows = evaluate_scene(label, {out.coarse.transform, out.fine.transform}, scene);
      write_metrics_csv(dir / "metrics.csv", rows);
      all_rows.insert(all_rows.end(), rows.begin(), rows.end());
    } catch (const Error& e) {
      failures.push_back({{"label", label}, {"error", to_string(e.code())}, {"stage", e.stage()}, {"message", e.what()}});
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log << label << " " << secs << " s\n";
  }
  write_metrics_csv(out_dir / "metrics.csv", all_rows);
  Report report;
  if (!all_rows.empty()) report = build_report(all_rows);
  report.stats["failures"] = failures;
  write_text_file(out_dir / "table.csv", report.table_csv);
  write_json_file(out_dir / "stats.json", report.stats);
  return report;
}

}  // namespace mreg
