#include "mreg/mreg.h"

#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>

#include "mreg/config.hpp"
#include "mreg/eval.hpp"
#include "mreg/io.hpp"
#include "mreg/pipeline.hpp"

struct mreg_config {
  mreg::RunConfig cfg;
};

struct mreg_cloud {
  mreg::PointCloud cloud;
};

struct mreg_scene {
  mreg::PhantomScene scene;
  std::vector<mreg::DepthFrame> frames;
};

struct mreg_result {
  mreg::RegistrationOutput out;
};

namespace {

struct LastError {
  std::string message;
  std::string code;
  std::string stage;
};

thread_local LastError g_error;

mreg_status fail(mreg_status status, std::string message, std::string code, std::string stage = {}) {
  g_error = {std::move(message), std::move(code), std::move(stage)};
  return status;
}

mreg_status status_of(mreg::ErrorCode code) {
  switch (mreg::kind_of(code)) {
    case mreg::ErrorKind::Config:
      return MREG_ERR_CONFIG;
    case mreg::ErrorKind::Io:
      return MREG_ERR_IO;
    case mreg::ErrorKind::Algorithm:
      return MREG_ERR_ALGORITHM;
  }
  return MREG_ERR_INTERNAL;
}

template <class F>
mreg_status guarded(F&& body) {
  g_error = {};
  try {
    body();
    return MREG_OK;
  } catch (const mreg::Error& e) {
    return fail(status_of(e.code()), e.what(), mreg::to_string(e.code()), e.stage());
  } catch (const std::bad_alloc&) {
    return fail(MREG_ERR_INTERNAL, "out of memory", "Internal");
  } catch (const std::exception& e) {
    return fail(MREG_ERR_INTERNAL, e.what(), "Internal");
  }
}

#define MREG_REQUIRE(ptr)                                                         \
  do {                                                                            \
    if (!(ptr)) return fail(MREG_ERR_ARGUMENT, #ptr " must not be null", "Argument"); \
  } while (0)

}  // namespace

extern "C" {

const char* mreg_version(void) { return "1.0.0"; }

const char* mreg_last_error_message(void) { return g_error.message.c_str(); }
const char* mreg_last_error_code(void) { return g_error.code.c_str(); }
const char* mreg_last_error_stage(void) { return g_error.stage.c_str(); }

void mreg_string_free(char* s) { delete[] s; }

mreg_status mreg_config_new(mreg_config** out) {
  MREG_REQUIRE(out);
  return guarded([&] { *out = new mreg_config{}; });
}

mreg_status mreg_config_load(const char* path, mreg_config** out) {
  MREG_REQUIRE(path);
  MREG_REQUIRE(out);
  return guarded([&] { *out = new mreg_config{mreg::load_config(path)}; });
}

mreg_status mreg_config_save(const mreg_config* cfg, const char* path) {
  MREG_REQUIRE(cfg);
  MREG_REQUIRE(path);
  return guarded([&] { mreg::save_config(path, cfg->cfg); });
}

mreg_status mreg_config_set(mreg_config* cfg, const char* assignment) {
  MREG_REQUIRE(cfg);
  MREG_REQUIRE(assignment);
  return guarded([&] { mreg::apply_override(cfg->cfg, assignment); });
}

mreg_status mreg_config_get_seed(const mreg_config* cfg, uint64_t* seed) {
  MREG_REQUIRE(cfg);
  MREG_REQUIRE(seed);
  return guarded([&] { *seed = cfg->cfg.seed; });
}

mreg_status mreg_config_to_json(const mreg_config* cfg, char** json) {
  MREG_REQUIRE(cfg);
  MREG_REQUIRE(json);
  return guarded([&] {
    const std::string text = mreg::to_json(cfg->cfg).dump(2);
    char* buf = new char[text.size() + 1];
    std::memcpy(buf, text.c_str(), text.size() + 1);
    *json = buf;
  });
}

void mreg_config_free(mreg_config* cfg) { delete cfg; }

mreg_status mreg_cloud_from_points(const double* xyz, size_t n, int frame, mreg_cloud** out) {
  MREG_REQUIRE(out);
  if (n > 0) MREG_REQUIRE(xyz);
  if (frame < 0 || frame > static_cast<int>(mreg::FrameId::Tool)) {
    return fail(MREG_ERR_ARGUMENT, "frame id out of range", "Argument");
  }
  return guarded([&] {
    auto c = std::make_unique<mreg_cloud>();
    c->cloud.frame = static_cast<mreg::FrameId>(frame);
    for (size_t i = 0; i < n; ++i) c->cloud.points.emplace_back(xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]);
    c->cloud.validate();
    *out = c.release();
  });
}

mreg_status mreg_cloud_read_ply(const char* path, mreg_cloud** out) {
  MREG_REQUIRE(path);
  MREG_REQUIRE(out);
  return guarded([&] { *out = new mreg_cloud{mreg::read_ply(path)}; });
}

mreg_status mreg_cloud_write_ply(const mreg_cloud* cloud, const char* path) {
  MREG_REQUIRE(cloud);
  MREG_REQUIRE(path);
  return guarded([&] { mreg::write_ply(path, cloud->cloud); });
}

mreg_status mreg_cloud_size(const mreg_cloud* cloud, size_t* n) {
  MREG_REQUIRE(cloud);
  MREG_REQUIRE(n);
  *n = cloud->cloud.size();
  g_error = {};
  return MREG_OK;
}

mreg_status mreg_cloud_points(const mreg_cloud* cloud, double* xyz, size_t capacity) {
  MREG_REQUIRE(cloud);
  MREG_REQUIRE(xyz);
  if (capacity < cloud->cloud.size()) return fail(MREG_ERR_ARGUMENT, "buffer smaller than the cloud", "Argument");
  g_error = {};
  for (size_t i = 0; i < cloud->cloud.size(); ++i) {
    for (int k = 0; k < 3; ++k) xyz[3 * i + k] = cloud->cloud.points[i][k];
  }
  return MREG_OK;
}

void mreg_cloud_free(mreg_cloud* cloud) { delete cloud; }

mreg_status mreg_phantom_generate(const mreg_config* cfg, uint64_t seed, mreg_scene** out) {
  MREG_REQUIRE(cfg);
  MREG_REQUIRE(out);
  return guarded([&] { *out = new mreg_scene{mreg::generate_phantom(cfg->cfg.phantom, seed), {}}; });
}

mreg_status mreg_scene_load(const char* dir, mreg_scene** out) {
  MREG_REQUIRE(dir);
  MREG_REQUIRE(out);
  return guarded([&] {
    auto s = std::make_unique<mreg_scene>();
    s->scene = mreg::load_scene(dir);
    s->frames = mreg::load_frames(dir);
    *out = s.release();
  });
}

mreg_status mreg_scene_simulate(mreg_scene* scene, const mreg_config* cfg) {
  MREG_REQUIRE(scene);
  MREG_REQUIRE(cfg);
  return guarded([&] {
    cfg->cfg.validate();
    scene->frames = mreg::acquire_frames(cfg->cfg, scene->scene, scene->scene.seed);
  });
}

mreg_status mreg_scene_save(const mreg_scene* scene, const char* dir) {
  MREG_REQUIRE(scene);
  MREG_REQUIRE(dir);
  return guarded([&] { mreg::save_scene(dir, scene->scene, scene->frames); });
}

mreg_status mreg_scene_acquire(mreg_scene* scene, const mreg_config* cfg, mreg_cloud** bed) {
  MREG_REQUIRE(scene);
  MREG_REQUIRE(cfg);
  MREG_REQUIRE(bed);
  return guarded([&] {
    cfg->cfg.validate();
    if (scene->frames.empty()) scene->frames = mreg::acquire_frames(cfg->cfg, scene->scene, scene->scene.seed);
    *bed = new mreg_cloud{mreg::fuse_bed(cfg->cfg, scene->frames)};
  });
}

mreg_status mreg_scene_specimen(const mreg_scene* scene, mreg_cloud** out) {
  MREG_REQUIRE(scene);
  MREG_REQUIRE(out);
  return guarded([&] { *out = new mreg_cloud{scene->scene.specimen}; });
}

mreg_status mreg_scene_seed(const mreg_scene* scene, uint64_t* seed) {
  MREG_REQUIRE(scene);
  MREG_REQUIRE(seed);
  *seed = scene->scene.seed;
  g_error = {};
  return MREG_OK;
}

void mreg_scene_free(mreg_scene* scene) { delete scene; }

mreg_status mreg_register(const mreg_cloud* bed, const mreg_cloud* specimen, const mreg_config* cfg, uint64_t seed,
                          mreg_result** out) {
  MREG_REQUIRE(bed);
  MREG_REQUIRE(specimen);
  MREG_REQUIRE(cfg);
  MREG_REQUIRE(out);
  return guarded([&] {
    *out = new mreg_result{mreg::register_with_config(cfg->cfg, bed->cloud, specimen->cloud, seed)};
  });
}

mreg_status mreg_result_transform(const mreg_result* result, mreg_stage stage, double rotation[9],
                                  double translation[3]) {
  MREG_REQUIRE(result);
  MREG_REQUIRE(rotation);
  MREG_REQUIRE(translation);
  if (stage != MREG_STAGE_COARSE && stage != MREG_STAGE_FINE) {
    return fail(MREG_ERR_ARGUMENT, "unknown stage", "Argument");
  }
  const mreg::RigidTransform& t =
      stage == MREG_STAGE_COARSE ? result->out.coarse.transform : result->out.fine.transform;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rotation[3 * r + c] = t.rotation()(r, c);
    translation[r] = t.translation()[r];
  }
  g_error = {};
  return MREG_OK;
}

mreg_status mreg_result_write_json(const mreg_result* result, const char* path) {
  MREG_REQUIRE(result);
  MREG_REQUIRE(path);
  return guarded([&] { mreg::write_json_file(path, mreg::result_to_json(result->out)); });
}

void mreg_result_free(mreg_result* result) { delete result; }

mreg_status mreg_evaluate(const char* result_json, const char* scene_dir, const char* label, const char* metrics_csv) {
  MREG_REQUIRE(result_json);
  MREG_REQUIRE(scene_dir);
  MREG_REQUIRE(label);
  MREG_REQUIRE(metrics_csv);
  return guarded([&] {
    const auto transforms = mreg::stage_transforms_from_json(mreg::read_json_file(result_json));
    const auto scene = mreg::load_scene(scene_dir);
    const auto rows = mreg::evaluate_scene(label, transforms, scene);
    mreg::write_metrics_csv(metrics_csv, rows);
  });
}

mreg_status mreg_report(const char* const* metrics_csv, size_t n, const char* table_csv, const char* stats_json) {
  MREG_REQUIRE(metrics_csv);
  MREG_REQUIRE(table_csv);
  MREG_REQUIRE(stats_json);
  return guarded([&] {
    std::vector<mreg::MetricRow> rows;
    for (size_t i = 0; i < n; ++i) {
      if (!metrics_csv[i]) throw mreg::Error(mreg::ErrorCode::Io, "null metrics path");
      auto part = mreg::read_metrics_csv(metrics_csv[i]);
      rows.insert(rows.end(), part.begin(), part.end());
    }
    const mreg::Report report = mreg::build_report(rows);
    mreg::write_text_file(table_csv, report.table_csv);
    mreg::write_json_file(stats_json, report.stats);
  });
}

mreg_status mreg_pipeline(const mreg_config* cfg, uint64_t first, uint64_t last, const char* out_dir) {
  MREG_REQUIRE(cfg);
  MREG_REQUIRE(out_dir);
  if (last < first) return fail(MREG_ERR_CONFIG, "empty seed range", "Config");
  return guarded([&] { mreg::run_pipeline(cfg->cfg, {first, last}, out_dir); });
}

}  // extern "C"
