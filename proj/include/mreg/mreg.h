/* C interface to the mreg registration toolkit.
 *
 * Every function returns an mreg_status. On failure the calling thread's
 * last-error slots describe what went wrong until the next call. Objects are
 * opaque and owned by the caller; release each with its _free function.
 * Lengths are millimetres throughout. */
#ifndef MREG_H
#define MREG_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(MREG_BUILDING)
#    define MREG_API __declspec(dllexport)
#  else
#    define MREG_API __declspec(dllimport)
#  endif
#else
#  define MREG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mreg_status {
  MREG_OK = 0,
  MREG_ERR_CONFIG = 1,     /* bad parameters, config file or flag values */
  MREG_ERR_IO = 2,         /* missing or malformed files */
  MREG_ERR_ALGORITHM = 3,  /* e.g. NoCorrespondences, EmptyRoi */
  MREG_ERR_ARGUMENT = 4,   /* null handle or pointer */
  MREG_ERR_INTERNAL = 5
} mreg_status;

typedef enum mreg_stage { MREG_STAGE_COARSE = 0, MREG_STAGE_FINE = 1 } mreg_stage;

typedef struct mreg_config mreg_config;
typedef struct mreg_cloud mreg_cloud;
typedef struct mreg_scene mreg_scene;
typedef struct mreg_result mreg_result;

MREG_API const char* mreg_version(void);

/* Last failure on this thread. Empty strings after a successful call. */
MREG_API const char* mreg_last_error_message(void);
MREG_API const char* mreg_last_error_code(void);  /* e.g. "NoCorrespondences" */
MREG_API const char* mreg_last_error_stage(void); /* e.g. "coarse", may be empty */

MREG_API void mreg_string_free(char* s);

/* Configuration: defaults, JSON file form, dotted-key overrides. */
MREG_API mreg_status mreg_config_new(mreg_config** out);
MREG_API mreg_status mreg_config_load(const char* path, mreg_config** out);
MREG_API mreg_status mreg_config_save(const mreg_config* cfg, const char* path);
MREG_API mreg_status mreg_config_set(mreg_config* cfg, const char* assignment); /* "icp.max_iters=30" */
MREG_API mreg_status mreg_config_get_seed(const mreg_config* cfg, uint64_t* seed);
MREG_API mreg_status mreg_config_to_json(const mreg_config* cfg, char** json); /* free with mreg_string_free */
MREG_API void mreg_config_free(mreg_config* cfg);

/* Point clouds. frame: 0 World, 1 Depth, 2 Bed, 3 Specimen, 4 Tool. */
MREG_API mreg_status mreg_cloud_from_points(const double* xyz, size_t n, int frame, mreg_cloud** out);
MREG_API mreg_status mreg_cloud_read_ply(const char* path, mreg_cloud** out);
MREG_API mreg_status mreg_cloud_write_ply(const mreg_cloud* cloud, const char* path);
MREG_API mreg_status mreg_cloud_size(const mreg_cloud* cloud, size_t* n);
MREG_API mreg_status mreg_cloud_points(const mreg_cloud* cloud, double* xyz, size_t capacity);
MREG_API void mreg_cloud_free(mreg_cloud* cloud);

/* Synthetic scenes. */
MREG_API mreg_status mreg_phantom_generate(const mreg_config* cfg, uint64_t seed, mreg_scene** out);
MREG_API mreg_status mreg_scene_load(const char* dir, mreg_scene** out);
/* Simulates the depth frames held by the scene (replacing any loaded ones). */
MREG_API mreg_status mreg_scene_simulate(mreg_scene* scene, const mreg_config* cfg);
/* Writes the scene directory, including frames/ when the scene holds frames. */
MREG_API mreg_status mreg_scene_save(const mreg_scene* scene, const char* dir);
/* Fuses the scene's frames into a bed cloud, simulating them first if absent. */
MREG_API mreg_status mreg_scene_acquire(mreg_scene* scene, const mreg_config* cfg, mreg_cloud** bed);
MREG_API mreg_status mreg_scene_specimen(const mreg_scene* scene, mreg_cloud** out);
MREG_API mreg_status mreg_scene_seed(const mreg_scene* scene, uint64_t* seed);
MREG_API void mreg_scene_free(mreg_scene* scene);

/* Coarse -> auto-ROI -> ICP. `seed` drives keypoint sampling. */
MREG_API mreg_status mreg_register(const mreg_cloud* bed, const mreg_cloud* specimen, const mreg_config* cfg,
                                   uint64_t seed, mreg_result** out);
/* rotation: 9 row-major values; translation: 3 values. */
MREG_API mreg_status mreg_result_transform(const mreg_result* result, mreg_stage stage, double rotation[9],
                                           double translation[3]);
MREG_API mreg_status mreg_result_write_json(const mreg_result* result, const char* path);
MREG_API void mreg_result_free(mreg_result* result);

/* TRE and margin errors of a result file against a scene directory; nothing is
 * written unless the whole evaluation succeeds. */
MREG_API mreg_status mreg_evaluate(const char* result_json, const char* scene_dir, const char* label,
                                   const char* metrics_csv);
/* Aggregates metrics CSVs into a summary table and a statistics JSON. */
MREG_API mreg_status mreg_report(const char* const* metrics_csv, size_t n, const char* table_csv,
                                 const char* stats_json);
/* End-to-end run for seeds first..last into out_dir. */
MREG_API mreg_status mreg_pipeline(const mreg_config* cfg, uint64_t first, uint64_t last, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* MREG_H */
