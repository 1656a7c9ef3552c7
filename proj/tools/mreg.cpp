// mreg command-line front end. Talks to the library only through mreg.h.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mreg/mreg.h"

namespace {

namespace fs = std::filesystem;

enum Exit { kOk = 0, kUsage = 2, kConfig = 2, kIo = 3, kAlgorithm = 4, kInternal = 5 };

// Thrown after the error JSON has been printed.
struct Failed {
  int code;
};

int exit_for(mreg_status s) {
  switch (s) {
    case MREG_OK:
      return kOk;
    case MREG_ERR_CONFIG:
    case MREG_ERR_ARGUMENT:
      return kConfig;
    case MREG_ERR_IO:
      return kIo;
    case MREG_ERR_ALGORITHM:
      return kAlgorithm;
    default:
      return kInternal;
  }
}

const char* kind_name(int code) {
  switch (code) {
    case kConfig:
      return "config";
    case kIo:
      return "io";
    case kAlgorithm:
      return "algorithm";
    default:
      return "internal";
  }
}

void report_error(int exit_code, const std::string& code, const std::string& message, const std::string& stage) {
  nlohmann::json err = {{"kind", kind_name(exit_code)}, {"code", code}, {"message", message}, {"exit_code", exit_code}};
  if (!stage.empty()) err["stage"] = stage;
  std::cerr << nlohmann::json{{"error", err}}.dump() << "\n";
}

void check(mreg_status s) {
  if (s == MREG_OK) return;
  const int code = exit_for(s);
  report_error(code, mreg_last_error_code(), mreg_last_error_message(), mreg_last_error_stage());
  throw Failed{code};
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};

using Config = Handle<mreg_config, mreg_config_free>;
using Cloud = Handle<mreg_cloud, mreg_cloud_free>;
using Scene = Handle<mreg_scene, mreg_scene_free>;
using Result = Handle<mreg_result, mreg_result_free>;

struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void add_config_flags(CLI::App* app, ConfigFlags& f) {
  app->add_option("--config", f.file, "JSON config file (defaults when omitted)");
  app->add_option("--set", f.sets, "Override a config key, e.g. --set icp.max_iters=30");
  app->add_option("--seed", f.seed, "Master seed (config key: seed)");
}

void load(Config& cfg, const ConfigFlags& f) {
  if (f.file.empty()) {
    check(mreg_config_new(cfg.out()));
  } else {
    check(mreg_config_load(f.file.c_str(), cfg.out()));
  }
  for (const std::string& s : f.sets) check(mreg_config_set(cfg.get(), s.c_str()));
  if (f.seed) check(mreg_config_set(cfg.get(), ("seed=" + std::to_string(*f.seed)).c_str()));
}

std::uint64_t seed_of(const Config& cfg) {
  std::uint64_t s = 0;
  check(mreg_config_get_seed(cfg.get(), &s));
  return s;
}

// "N" or "A..B"
bool parse_range(const std::string& text, std::uint64_t& a, std::uint64_t& b) {
  try {
    std::size_t used = 0;
    const auto dots = text.find("..");
    if (dots == std::string::npos) {
      a = b = std::stoull(text, &used);
      return used == text.size();
    }
    const std::string lo = text.substr(0, dots);
    const std::string hi = text.substr(dots + 2);
    a = std::stoull(lo, &used);
    if (used != lo.size()) return false;
    b = std::stoull(hi, &used);
    return used == hi.size() && a <= b;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mreg: markerless specimen-to-bed registration toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mreg_version()));

  ConfigFlags phantom_cfg;
  std::string phantom_out;
  bool phantom_frames = false;
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic phantom scene directory");
  add_config_flags(phantom, phantom_cfg);
  phantom->add_option("--out", phantom_out, "Scene directory")->required();
  phantom->add_flag("--frames", phantom_frames, "Also write simulated depth frames");

  ConfigFlags acquire_cfg;
  std::string acquire_scene;
  std::string acquire_out;
  auto* acquire = app.add_subcommand("acquire", "Simulate depth frames and fuse them into a bed cloud");
  add_config_flags(acquire, acquire_cfg);
  acquire->add_option("--scene", acquire_scene, "Scene directory")->required();
  acquire->add_option("--out", acquire_out, "Output PLY")->required();

  ConfigFlags register_cfg;
  std::string reg_bed;
  std::string reg_spec;
  std::string reg_out;
  auto* reg = app.add_subcommand("register", "Coarse + fine registration of specimen onto bed");
  add_config_flags(reg, register_cfg);
  reg->add_option("--bed", reg_bed, "Bed PLY")->required();
  reg->add_option("--specimen", reg_spec, "Specimen PLY")->required();
  reg->add_option("--out", reg_out, "Result JSON")->required();

  std::string eval_result;
  std::string eval_scene;
  std::string eval_out;
  std::string eval_label = "run";
  auto* evaluate = app.add_subcommand("evaluate", "TRE and margin errors of a result against its scene");
  evaluate->add_option("--result", eval_result, "Result JSON")->required();
  evaluate->add_option("--scene", eval_scene, "Scene directory")->required();
  evaluate->add_option("--out", eval_out, "Metrics CSV")->required();
  evaluate->add_option("--label", eval_label, "Row label");

  std::vector<std::string> report_metrics;
  std::string report_out;
  std::string report_stats;
  auto* report = app.add_subcommand("report", "Summary table and statistical tests over metrics files");
  report->add_option("--metrics", report_metrics, "Metrics CSVs")->required();
  report->add_option("--out", report_out, "Table CSV")->required();
  report->add_option("--stats", report_stats, "Statistics JSON (default: <out>.stats.json)");

  ConfigFlags pipeline_cfg;
  std::string pipeline_seeds = "1..20";
  std::string pipeline_out;
  auto* pipeline = app.add_subcommand("pipeline", "phantom -> acquire -> register -> evaluate -> report");
  add_config_flags(pipeline, pipeline_cfg);
  pipeline->add_option("--seeds", pipeline_seeds, "Seed or range A..B");
  pipeline->add_option("--out", pipeline_out, "Output directory (config key: out_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error(kUsage, "Usage", e.what(), "");
    return kUsage;
  }

  try {
    if (*phantom) {
      Config cfg;
      load(cfg, phantom_cfg);
      Scene scene;
      check(mreg_phantom_generate(cfg.get(), seed_of(cfg), scene.out()));
      if (phantom_frames) check(mreg_scene_simulate(scene.get(), cfg.get()));
      check(mreg_scene_save(scene.get(), phantom_out.c_str()));
    } else if (*acquire) {
      Config cfg;
      load(cfg, acquire_cfg);
      Scene scene;
      check(mreg_scene_load(acquire_scene.c_str(), scene.out()));
      Cloud bed;
      check(mreg_scene_acquire(scene.get(), cfg.get(), bed.out()));
      check(mreg_cloud_write_ply(bed.get(), acquire_out.c_str()));
    } else if (*reg) {
      Config cfg;
      load(cfg, register_cfg);
      Cloud bed;
      Cloud spec;
      check(mreg_cloud_read_ply(reg_bed.c_str(), bed.out()));
      check(mreg_cloud_read_ply(reg_spec.c_str(), spec.out()));
      Result result;
      check(mreg_register(bed.get(), spec.get(), cfg.get(), seed_of(cfg), result.out()));
      check(mreg_result_write_json(result.get(), reg_out.c_str()));
    } else if (*evaluate) {
      check(mreg_evaluate(eval_result.c_str(), eval_scene.c_str(), eval_label.c_str(), eval_out.c_str()));
    } else if (*report) {
      if (report_stats.empty()) {
        fs::path p(report_out);
        report_stats = (p.parent_path() / (p.stem().string() + ".stats.json")).string();
      }
      std::vector<const char*> paths;
      for (const std::string& m : report_metrics) paths.push_back(m.c_str());
      check(mreg_report(paths.data(), paths.size(), report_out.c_str(), report_stats.c_str()));
    } else if (*pipeline) {
      std::uint64_t first = 0;
      std::uint64_t last = 0;
      if (!parse_range(pipeline_seeds, first, last)) {
        report_error(kConfig, "Config", "seed range '" + pipeline_seeds + "' is not N or A..B", "");
        return kConfig;
      }
      Config cfg;
      load(cfg, pipeline_cfg);
      if (!pipeline_out.empty()) {
        check(mreg_config_set(cfg.get(), ("out_dir=" + nlohmann::json(pipeline_out).dump()).c_str()));
      }
      char* text = nullptr;
      check(mreg_config_to_json(cfg.get(), &text));
      const std::string out_dir = nlohmann::json::parse(text).at("out_dir").get<std::string>();
      mreg_string_free(text);
      check(mreg_pipeline(cfg.get(), first, last, out_dir.c_str()));
      std::cout << (fs::path(out_dir) / "table.csv").string() << "\n";
    }
  } catch (const Failed& f) {
    return f.code;
  }
  return kOk;
}
