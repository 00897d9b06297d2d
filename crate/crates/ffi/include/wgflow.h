#ifndef WGFLOW_H
#define WGFLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Which field of the final state to copy.
 */
typedef enum WgfField {
  /*
   Node positions (line) or x coordinates, row-major (plane).
   */
  WGF_FIELD_X = 0,
  /*
   y coordinates, row-major (plane only).
   */
  WGF_FIELD_Y = 1,
  /*
   Cell densities (line) or node densities, row-major (plane).
   */
  WGF_FIELD_DENSITY = 2,
} WgfField;

/*
 Result codes. The nonzero values other than `NullArgument` and `Panic`
 match the CLI exit codes.
 */
typedef enum WgfStatus {
  WGF_STATUS_OK = 0,
  WGF_STATUS_NULL_ARGUMENT = 1,
  /*
   Bad configuration, unknown preset, unsupported combination.
   */
  WGF_STATUS_INVALID_INPUT = 2,
  /*
   Newton failure, distorted map, lost positivity and the like.
   */
  WGF_STATUS_NUMERICAL = 3,
  WGF_STATUS_IO = 4,
  /*
   Index or buffer size out of range.
   */
  WGF_STATUS_OUT_OF_RANGE = 5,
  WGF_STATUS_PANIC = 6,
} WgfStatus;

/*
 Opaque result of one run.
 */
typedef struct WgfRun WgfRun;

/*
 Opaque run specification.
 */
typedef struct WgfSpec WgfSpec;

/*
 One diagnostics row.
 */
typedef struct WgfTraceRow {
  uint64_t step;
  double time;
  double total_mass;
  double energy;
  double regularized_energy;
  double rho_min;
  double rho_max;
  double min_det;
  uint64_t newton_iterations;
} WgfTraceRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread (empty if none). The pointer
 stays valid until the next failing call on the same thread.
 */
const char *wgf_last_error(void);

/*
 Library version string (static).
 */
const char *wgf_version(void);

size_t wgf_preset_count(void);

/*
 Name of preset `index` (static string), or null when out of range.
 */
const char *wgf_preset_name(size_t index);

/*
 # Safety
 `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum WgfStatus wgf_spec_from_preset(const char *name, struct WgfSpec **out);

/*
 Parses a TOML run specification.

 # Safety
 `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum WgfStatus wgf_spec_from_toml(const char *toml, struct WgfSpec **out);

/*
 # Safety
 `spec` must come from a `wgf_spec_*` constructor or be null.
 */
void wgf_spec_free(struct WgfSpec *spec);

/*
 Final time. The spec is left unchanged if the result does not validate.

 # Safety
 `spec` must be a live spec handle.
 */
enum WgfStatus wgf_spec_set_end_time(struct WgfSpec *spec, double end_time);

/*
 # Safety
 `spec` must be a live spec handle.
 */
enum WgfStatus wgf_spec_set_dt(struct WgfSpec *spec, double dt);

/*
 Cells per direction.

 # Safety
 `spec` must be a live spec handle.
 */
enum WgfStatus wgf_spec_set_cells(struct WgfSpec *spec, size_t cells);

/*
 Spatial dimension of the spec (1 or 2), 0 for a null handle.

 # Safety
 `spec` must be a live spec handle or null.
 */
size_t wgf_spec_dimension(const struct WgfSpec *spec);

/*
 Runs the spec. A run that stops on a numerical failure still produces a
 result handle with its partial trace; the return value is then
 `Numerical`.

 # Safety
 `spec` must be a live spec handle and `out` a valid pointer.
 */
enum WgfStatus wgf_run(const struct WgfSpec *spec, struct WgfRun **out);

/*
 # Safety
 `run` must come from [`wgf_run`] or be null.
 */
void wgf_run_free(struct WgfRun *run);

/*
 0 completed, 1 stopped at the density cap, 2 failed; -1 for null.

 # Safety
 `run` must be a live result handle or null.
 */
int32_t wgf_run_outcome(const struct WgfRun *run);

/*
 # Safety
 `run` must be a live result handle or null.
 */
size_t wgf_run_trace_len(const struct WgfRun *run);

/*
 # Safety
 `run` must be a live result handle and `row` a valid pointer.
 */
enum WgfStatus wgf_run_trace_row(const struct WgfRun *run, size_t index, struct WgfTraceRow *row);

/*
 Copies a field of the last accepted state into `buf`. With a null `buf`
 only the required length is written to `len`; otherwise `*len` is the
 buffer capacity on input and the number of values on output.

 # Safety
 `run` must be a live result handle, `len` a valid pointer and `buf`
 either null or valid for `*len` values.
 */
enum WgfStatus wgf_run_final_field(const struct WgfRun *run,
                                   enum WgfField which,
                                   double *buf,
                                   size_t *len);

/*
 Time of the last accepted state, NaN for null.

 # Safety
 `run` must be a live result handle or null.
 */
double wgf_run_final_time(const struct WgfRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WGFLOW_H */
