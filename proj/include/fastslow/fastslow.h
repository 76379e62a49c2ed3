#ifndef FASTSLOW_FASTSLOW_H
#define FASTSLOW_FASTSLOW_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(FASTSLOW_BUILDING)
#    define FS_API __declspec(dllexport)
#  else
#    define FS_API __declspec(dllimport)
#  endif
#else
#  define FS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Nonzero values are error categories and double as CLI exit codes. */
typedef enum fs_status {
    FS_OK = 0,
    FS_CONFIG_INVALID = 1,
    FS_INTEGRATION_DIVERGED = 2,
    FS_NEAR_SINGULAR = 3,
    FS_TOO_FEW_SAMPLES = 4,
    FS_INSUFFICIENT_LAGS = 5,
    FS_STEP_SIZE_GUARD = 6,
    FS_NOT_PSD = 7,
    FS_DIMENSION_MISMATCH = 8,
    FS_OUT_OF_HULL = 9,
    FS_MODE_COUNT_TOO_LARGE = 10,
    FS_MISALIGNED = 11,
    FS_TRAJECTORY_TOO_SHORT = 12,
    FS_NON_FINITE = 13,
    FS_IO = 14,
    FS_CHECK_FAILED = 15,
    FS_INVALID_ARGUMENT = 16,
    FS_INTERNAL = 17
} fs_status;

FS_API const char* fs_version(void);

/* Stable machine-readable name of a status, e.g. "config-invalid". */
FS_API const char* fs_status_name(fs_status status);

/* Details of the last failure on the calling thread. The strings stay valid
 * until the next failing call on the same thread. */
FS_API const char* fs_last_error_message(void);
FS_API const char* fs_last_error_module(void);
FS_API const char* fs_last_error_operation(void);

/* ---- Experiments --------------------------------------------------------- */

typedef struct fs_experiment fs_experiment;

FS_API fs_status fs_experiment_load(const char* path, fs_experiment** out);
FS_API fs_status fs_experiment_parse(const char* yaml_text, fs_experiment** out);
FS_API void fs_experiment_free(fs_experiment* experiment);

/* Name of the configured kind, e.g. "converge". Owned by the handle. */
FS_API const char* fs_experiment_kind(const fs_experiment* experiment);
FS_API fs_status fs_experiment_set_seed(fs_experiment* experiment, uint64_t seed);
FS_API fs_status fs_experiment_set_threads(fs_experiment* experiment, int threads);
FS_API fs_status fs_experiment_set_output_dir(fs_experiment* experiment, const char* dir);

/* Canonical YAML of the resolved configuration. Copies at most `capacity`
 * bytes including the terminator; `needed` receives the full size. */
FS_API fs_status fs_experiment_serialize(const fs_experiment* experiment, char* buffer, size_t capacity,
                                         size_t* needed);

/* Run the pipeline and write its reports. A failed statistical check returns
 * FS_CHECK_FAILED after the reports are written. */
FS_API fs_status fs_experiment_run(fs_experiment* experiment);

/* Report files written by the last run, relative to the output directory. */
FS_API size_t fs_experiment_output_count(const fs_experiment* experiment);
FS_API const char* fs_experiment_output_name(const fs_experiment* experiment, size_t index);
FS_API const char* fs_experiment_output_dir(const fs_experiment* experiment);

/* ---- Fast drivers -------------------------------------------------------- */

typedef struct fs_driver fs_driver;

typedef enum fs_driver_kind { FS_DRIVER_LORENZ63 = 0, FS_DRIVER_DOUBLING_MAP = 1, FS_DRIVER_OU = 2 } fs_driver_kind;

typedef struct fs_driver_params {
    double sigma, rho, beta; /* lorenz63 */
    double gamma, noise;     /* ou surrogate */
    int ou_dimension;
} fs_driver_params;

/* Default parameters (Lorenz 10, 28, 8/3; OU gamma 1, noise 1, dimension 1). */
FS_API fs_driver_params fs_driver_default_params(void);

FS_API fs_status fs_driver_create(fs_driver_kind kind, const fs_driver_params* params, uint64_t seed, uint64_t member,
                                  fs_driver** out);
FS_API void fs_driver_free(fs_driver* driver);
FS_API int fs_driver_dimension(const fs_driver* driver);
FS_API fs_status fs_driver_set_state(fs_driver* driver, const double* state, int dim);
FS_API fs_status fs_driver_state(const fs_driver* driver, double* state, int dim);
FS_API fs_status fs_driver_advance(fs_driver* driver, double dt_fast, int64_t steps);

/* ---- Homogenized coefficients ------------------------------------------- */

typedef struct fs_coefficients fs_coefficients;

FS_API fs_status fs_coefficients_load(const char* path, fs_coefficients** out);
FS_API void fs_coefficients_free(fs_coefficients* coefficients);
FS_API int fs_coefficients_dimension(const fs_coefficients* coefficients);

/* drift receives d values, sigma d*d values in row-major order. */
FS_API fs_status fs_coefficients_eval(const fs_coefficients* coefficients, const double* x, int dim, double* drift,
                                      double* sigma);

#ifdef __cplusplus
}
#endif

#endif
