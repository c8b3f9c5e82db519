#ifndef DIELINV_H
#define DIELINV_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(DIELINV_BUILDING)
#    define DIELINV_API __declspec(dllexport)
#  else
#    define DIELINV_API __declspec(dllimport)
#  endif
#else
#  define DIELINV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dielinv_status {
  DIELINV_OK = 0,
  DIELINV_ERR_INVALID_ARGUMENT = 1,
  DIELINV_ERR_NUMERICAL = 2,
  DIELINV_ERR_IO = 3,
  DIELINV_ERR_INTERNAL = 4
} dielinv_status;

typedef struct dielinv_config dielinv_config;
typedef struct dielinv_summary dielinv_summary;

DIELINV_API const char* dielinv_version(void);

/* Message of the last failed call on this thread; empty when none. */
DIELINV_API const char* dielinv_last_error(void);

/* level: trace, debug, info, warn, error, critical or off. */
DIELINV_API dielinv_status dielinv_set_log_level(const char* level);

/* Configuration. A NULL or empty path gives the built-in defaults. */
DIELINV_API dielinv_status dielinv_config_load(const char* path, dielinv_config** out);
DIELINV_API dielinv_status dielinv_config_parse(const char* yaml_text, dielinv_config** out);
DIELINV_API void dielinv_config_free(dielinv_config* cfg);
DIELINV_API dielinv_status dielinv_config_set_seed(dielinv_config* cfg, uint64_t seed);
/* mode: "test1" or "test2" */
DIELINV_API dielinv_status dielinv_config_set_mode(dielinv_config* cfg, const char* mode);
DIELINV_API dielinv_status dielinv_config_hash(const dielinv_config* cfg, uint64_t* out);
/* Canonical YAML. Writes at most `size` bytes including the terminator;
   `needed` receives the full length plus one. */
DIELINV_API dielinv_status dielinv_config_dump(const dielinv_config* cfg, char* buf, size_t size, size_t* needed);

/* stage: "simulate", "preprocess", "invert" or "full". */
DIELINV_API dielinv_status dielinv_run(const dielinv_config* cfg, const char* stage, const char* out_dir);

/* Reconstruction summary of a finished run directory. */
DIELINV_API dielinv_status dielinv_summary_load(const char* out_dir, dielinv_summary** out);
DIELINV_API void dielinv_summary_free(dielinv_summary* s);
/* Numeric fields: max_eps, n_comp, eps_comp, selected_layer, gamma_t_area,
   centroid_x, centroid_y, centroid_z, no_target (0 or 1). */
DIELINV_API dielinv_status dielinv_summary_get(const dielinv_summary* s, const char* key, double* out);
/* String fields: mode, target_class, message. Valid until the handle is freed. */
DIELINV_API dielinv_status dielinv_summary_get_string(const dielinv_summary* s, const char* key, const char** out);

/* Closed-form layer coefficients A1, A2, A3 for layer n of the grid
   s_hi - k h, k = 0..N. */
DIELINV_API dielinv_status dielinv_carleman_coefficients(size_t n, double s_lo, double s_hi, double h, double lambda,
                                                         double out[3]);

/* min(sim) / min(exp) over n samples. */
DIELINV_API dielinv_status dielinv_calibration_factor(const double* sim, const double* exp, size_t n, double* out);

#ifdef __cplusplus
}
#endif

#endif
