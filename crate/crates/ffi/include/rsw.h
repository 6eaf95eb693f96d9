#ifndef RSW_H
#define RSW_H

/* Generated by cbindgen from rsw-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible entry point.
typedef enum RswStatus {
  RSW_STATUS_OK = 0,
  // Bad configuration, unknown case, or I/O trouble.
  RSW_STATUS_CONFIG_ERROR = 2,
  // The numerics failed (positivity loss, solver divergence, energy rise).
  RSW_STATUS_NUMERICAL_ERROR = 3,
  // Null pointer, wrong buffer length, or invalid enum value.
  RSW_STATUS_INVALID_ARGUMENT = 4,
} RswStatus;

// Cell fields exposed from a finished run.
typedef enum RswField {
  RSW_FIELD_H = 0,
  RSW_FIELD_U = 1,
  RSW_FIELD_V = 2,
  RSW_FIELD_B = 3,
  RSW_FIELD_PHI = 4,
  RSW_FIELD_PV = 5,
} RswField;

// Columns of the per-step diagnostics ledger.
typedef enum RswLedgerColumn {
  RSW_LEDGER_COLUMN_T = 0,
  RSW_LEDGER_COLUMN_DT = 1,
  RSW_LEDGER_COLUMN_ENERGY = 2,
  RSW_LEDGER_COLUMN_MASS = 3,
  RSW_LEDGER_COLUMN_MOM_X = 4,
  RSW_LEDGER_COLUMN_MOM_Y = 5,
  RSW_LEDGER_COLUMN_MIN_H = 6,
  RSW_LEDGER_COLUMN_MAX_H = 7,
  RSW_LEDGER_COLUMN_Q2 = 8,
  RSW_LEDGER_COLUMN_R2 = 9,
  RSW_LEDGER_COLUMN_ITERS = 10,
} RswLedgerColumn;

// Opaque run configuration handle.
typedef struct RswConfig RswConfig;

// Opaque handle to a finished run.
typedef struct RswRun RswRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread. The pointer
// stays valid until the next failing call on the same thread.
const char *rsw_last_error_message(void);

// Number of catalog cases.
size_t rsw_case_count(void);

// Write the NUL-terminated name of catalog case `index` into `buf`.
//
// # Safety
// `buf` must point to at least `len` writable bytes.
enum RswStatus rsw_case_name(size_t index, char *buf, size_t len);

// Create a configuration for the named catalog case. Returns null when the
// name is not valid UTF-8; unknown names surface when the run executes.
//
// # Safety
// `case_name` must be a NUL-terminated string.
struct RswConfig *rsw_config_new(const char *case_name);

// # Safety
// `config` must come from [`rsw_config_new`] and not be freed twice.
void rsw_config_free(struct RswConfig *config);

// Override the resolution (cell count along x for quasi-1D cases).
//
// # Safety
// `config` must be a valid configuration handle.
enum RswStatus rsw_config_set_resolution(struct RswConfig *config, size_t nx, size_t ny);

// Override the final time.
//
// # Safety
// `config` must be a valid configuration handle.
enum RswStatus rsw_config_set_t_final(struct RswConfig *config, double t_final);

// Override a scalar parameter by name: one of "g", "omega", "eta", "zeta",
// "alpha", "cfl_safety".
//
// # Safety
// `config` must be a valid handle and `name` NUL-terminated.
enum RswStatus rsw_config_set_param(struct RswConfig *config, const char *name, double value);

// Write run outputs (ledger CSV, snapshots, manifest) under `dir`.
//
// # Safety
// `config` must be a valid handle and `dir` NUL-terminated.
enum RswStatus rsw_config_set_output_dir(struct RswConfig *config, const char *dir);

// Execute the configured run. On success returns a run handle and stores
// `RSW_STATUS_OK` in `status_out` (when non-null); on failure returns
// null with the status and thread-local error message set.
//
// # Safety
// `config` must be a valid configuration handle.
struct RswRun *rsw_run_execute(const struct RswConfig *config, enum RswStatus *status_out);

// # Safety
// `run` must come from [`rsw_run_execute`] and not be freed twice.
void rsw_run_free(struct RswRun *run);

// Accepted steps of the run.
//
// # Safety
// `run` must be a valid run handle.
size_t rsw_run_steps(const struct RswRun *run);

// Physical time reached.
//
// # Safety
// `run` must be a valid run handle.
double rsw_run_final_time(const struct RswRun *run);

// Grid extents; either output pointer may be null.
//
// # Safety
// `run` must be a valid run handle; non-null outputs must be writable.
enum RswStatus rsw_run_grid(const struct RswRun *run, size_t *nx_out, size_t *ny_out);

// Copy a final-state cell field into `out` (length must be nx * ny).
//
// # Safety
// `run` must be valid and `out` point to `len` writable doubles.
enum RswStatus rsw_run_field(const struct RswRun *run,
                             enum RswField field,
                             double *out,
                             size_t len);

// Rows in the diagnostics ledger (initial row plus one per step).
//
// # Safety
// `run` must be a valid run handle.
size_t rsw_run_ledger_rows(const struct RswRun *run);

// Copy one ledger column into `out` (length must equal the row count;
// the iteration column is widened to double).
//
// # Safety
// `run` must be valid and `out` point to `len` writable doubles.
enum RswStatus rsw_run_ledger_column(const struct RswRun *run,
                                     enum RswLedgerColumn column,
                                     double *out,
                                     size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSW_H */
