#ifndef MATCHSTAB_H
#define MATCHSTAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MsPolicy {
  MS_POLICY_FIFO = 0,
  MS_POLICY_LIFO = 1,
  MS_POLICY_PRIORITY = 2,
  MS_POLICY_RANDOM = 3,
  MS_POLICY_MATCH_LONGEST = 4,
  MS_POLICY_MATCH_SHORTEST = 5,
  MS_POLICY_FLOW = 6,
} MsPolicy;

typedef enum MsStatus {
  MS_STATUS_OK = 0,
  MS_STATUS_NULL_POINTER = 1,
  MS_STATUS_INVALID_UTF8 = 2,
  MS_STATUS_PARSE_ERROR = 3,
  MS_STATUS_INVALID_ARGUMENT = 4,
  MS_STATUS_NO_MEASURE = 5,
  MS_STATUS_ANALYSIS_ERROR = 6,
  MS_STATUS_SIMULATION_ERROR = 7,
  MS_STATUS_PANIC = 8,
} MsStatus;

/**
 * Opaque model handle.
 */
typedef struct MsModel MsModel;

/**
 * Summary of one simulation run.
 */
typedef struct MsSimulationReport {
  uint64_t horizon;
  uint64_t seed;
  double avg_buffer;
  uint64_t max_buffer;
  uint64_t final_buffer;
  uint64_t empty_visits;
} MsSimulationReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a JSON model. On success `*out` owns a new handle.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MsStatus ms_model_from_json(const char *json, struct MsModel **out);

/**
 * Loads a built-in model (`nn`, `nnn`, `nn-fdiag`, `nn-fanti`,
 * `nn-counterexample`).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MsStatus ms_model_builtin(const char *name, struct MsModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void ms_model_free(struct MsModel *model);

/**
 * Serializes a model to JSON; release the string with `ms_string_free`.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum MsStatus ms_model_to_json(const struct MsModel *model, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void ms_string_free(char *s);

/**
 * Number of customer and server classes.
 *
 * # Safety
 * `model` must be a live handle; the out pointers must be valid.
 */
enum MsStatus ms_model_shape(const struct MsModel *model, size_t *customers, size_t *servers);

/**
 * NCond for the model's measure.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum MsStatus ms_check_ncond(const struct MsModel *model, bool *out);

/**
 * SCond for the model's measure.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum MsStatus ms_check_scond(const struct MsModel *model, bool *out);

/**
 * Whether the pairing digraph of the structure is strongly connected.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum MsStatus ms_is_stable_structure(const struct MsModel *model, bool *out);

/**
 * Number of facets, including the zero facet, and how many are saturated.
 *
 * # Safety
 * `model` must be a live handle; the out pointers must be valid.
 */
enum MsStatus ms_facet_count(const struct MsModel *model, size_t *total, size_t *saturated);

/**
 * Simulates `horizon` steps from the empty state. `policy` is an
 * `MsPolicy` value; PR uses the model's priorities and FLOW requires NCond.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum MsStatus ms_simulate(const struct MsModel *model,
                          uint32_t policy,
                          uint64_t horizon,
                          uint64_t seed,
                          struct MsSimulationReport *out);

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next call into the library on this thread.
 */
const char *ms_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MATCHSTAB_H */
