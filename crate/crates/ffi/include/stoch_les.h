#ifndef STOCH_LES_H
#define STOCH_LES_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum StochLesStatus {
  STOCH_LES_STATUS_OK = 0,
  STOCH_LES_STATUS_INVALID_ARGUMENT = 1,
  STOCH_LES_STATUS_CONFIGURATION = 2,
  STOCH_LES_STATUS_NUMERICAL = 3,
  STOCH_LES_STATUS_MISSING_ARTIFACT = 4,
  STOCH_LES_STATUS_IO = 5,
  STOCH_LES_STATUS_PANIC = 6,
} StochLesStatus;

typedef enum StochLesGenerator {
  STOCH_LES_GENERATOR_EXACT = 0,
  STOCH_LES_GENERATOR_WM = 1,
} StochLesGenerator;

// Opaque experiment configuration.
typedef struct StochLesConfig StochLesConfig;

// Opaque fBM sample path.
typedef struct StochLesFbmPath StochLesFbmPath;

// Opaque space-time field on a uniform grid over [-1, 1].
typedef struct StochLesField StochLesField;

// Opaque comparison report of a finished pipeline run.
typedef struct StochLesReport StochLesReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *stoch_les_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *stoch_les_version(void);

// Release a string returned by this library.
//
// # Safety
// `s` must come from this library and not have been freed.
void stoch_les_string_free(char *s);

// Sample `n_samples` points of an fBM path on `[0, horizon]`, `t = 0` included.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum StochLesStatus stoch_les_fbm_generate(double hurst,
                                           enum StochLesGenerator generator,
                                           size_t n_samples,
                                           double horizon,
                                           uint64_t seed,
                                           struct StochLesFbmPath **out);

// # Safety
// `path` must be a live handle or null.
size_t stoch_les_fbm_len(const struct StochLesFbmPath *path);

// # Safety
// `path` must be a live handle; `times` and `values` must hold `len` doubles
// each (either may be null to skip it).
enum StochLesStatus stoch_les_fbm_copy(const struct StochLesFbmPath *path,
                                       double *times,
                                       double *values,
                                       size_t len);

// # Safety
// `path` must be a handle from this library or null.
void stoch_les_fbm_free(struct StochLesFbmPath *path);

// Field from row-major data (`n_times` rows of `n_points` values).
//
// # Safety
// `data` must hold `n_points * n_times` doubles; `out` must be valid.
enum StochLesStatus stoch_les_field_new(size_t n_points,
                                        double dt,
                                        size_t n_times,
                                        const double *data,
                                        struct StochLesField **out);

// Read a field CSV (and its JSON sidecar when present).
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid.
enum StochLesStatus stoch_les_field_read_csv(const char *path, struct StochLesField **out);

// # Safety
// `field` must be a live handle; `path` a NUL-terminated string.
enum StochLesStatus stoch_les_field_write_csv(const struct StochLesField *field, const char *path);

// # Safety
// `field` must be a live handle or null.
size_t stoch_les_field_n_points(const struct StochLesField *field);

// # Safety
// `field` must be a live handle or null.
size_t stoch_les_field_n_times(const struct StochLesField *field);

// # Safety
// `field` must be a live handle or null.
double stoch_les_field_dt(const struct StochLesField *field);

// Copy the row-major values into `buf` (`len == n_points * n_times`).
//
// # Safety
// `field` must be a live handle; `buf` must hold `len` doubles.
enum StochLesStatus stoch_les_field_copy(const struct StochLesField *field,
                                         double *buf,
                                         size_t len);

// Gaussian filter of width `delta`.
//
// # Safety
// `field` must be a live handle; `out` must be valid.
enum StochLesStatus stoch_les_field_filter(const struct StochLesField *field,
                                           double delta,
                                           struct StochLesField **out);

// Relative space-time L² error of `field` against `reference`.
//
// # Safety
// Both handles must be live; `out` must be valid.
enum StochLesStatus stoch_les_field_relative_l2(const struct StochLesField *field,
                                                const struct StochLesField *reference,
                                                double *out);

// # Safety
// `field` must be a handle from this library or null.
void stoch_les_field_free(struct StochLesField *field);

// Default configuration; `full_scale != 0` selects the Δx = 0.001 geometry.
//
// # Safety
// `out` must be valid.
enum StochLesStatus stoch_les_config_default(int32_t full_scale, struct StochLesConfig **out);

// Parse a TOML configuration.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be valid.
enum StochLesStatus stoch_les_config_from_toml(const char *toml, struct StochLesConfig **out);

// Configuration as TOML; release with [`stoch_les_string_free`].
//
// # Safety
// `config` must be a live handle.
char *stoch_les_config_to_toml(const struct StochLesConfig *config);

// # Safety
// `config` must be a handle from this library or null.
void stoch_les_config_free(struct StochLesConfig *config);

// Run the full experiment, writing artifacts below `out_dir`.
//
// # Safety
// `config` must be a live handle, `out_dir` a NUL-terminated string and
// `out` valid.
enum StochLesStatus stoch_les_pipeline_run(const struct StochLesConfig *config,
                                           const char *out_dir,
                                           struct StochLesReport **out);

// The two headline errors of a report.
//
// # Safety
// `report` must be a live handle; the output pointers must be valid.
enum StochLesStatus stoch_les_report_errors(const struct StochLesReport *report,
                                            double *err_no_model,
                                            double *err_stochastic_les);

// Full report as JSON; release with [`stoch_les_string_free`].
//
// # Safety
// `report` must be a live handle.
char *stoch_les_report_to_json(const struct StochLesReport *report);

// # Safety
// `report` must be a handle from this library or null.
void stoch_les_report_free(struct StochLesReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STOCH_LES_H */
