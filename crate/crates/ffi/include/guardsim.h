/* C interface to the boundary-defense simulator.
 * See the crate documentation for ownership and threading rules. */

#ifndef GUARDSIM_H
#define GUARDSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Anything other than `Ok` leaves a
 * human-readable message in `guardsim_last_error`.
 */
enum GuardsimStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  GuardsimStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  GuardsimStatus_NullPointer = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  GuardsimStatus_InvalidUtf8 = 2,
  /**
   * The plan text could not be parsed.
   */
  GuardsimStatus_ParseError = 3,
  /**
   * The plan parsed but failed validation, or an argument referred to
   * a policy, cell, or replication the plan does not contain.
   */
  GuardsimStatus_InvalidConfig = 4,
  /**
   * Simulation or file output failed.
   */
  GuardsimStatus_ExecutionError = 5,
  /**
   * An internal panic was caught at the boundary.
   */
  GuardsimStatus_Panic = 6,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum GuardsimStatus GuardsimStatus;
#else
typedef int32_t GuardsimStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * Opaque experiment plan handle.
 */
typedef struct GuardsimPlan GuardsimPlan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message from the most recent failed call on this thread, empty when
 * nothing failed yet. Do not free.
 */
const char *guardsim_last_error(void);

/**
 * Crate version as a static string. Do not free.
 */
const char *guardsim_version(void);

/**
 * Parses and validates a TOML experiment plan.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be a valid
 * destination for one pointer.
 */
GuardsimStatus guardsim_plan_from_toml(const char *text, struct GuardsimPlan **out);

/**
 * Parses and validates a JSON experiment plan.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be a valid
 * destination for one pointer.
 */
GuardsimStatus guardsim_plan_from_json(const char *text, struct GuardsimPlan **out);

/**
 * The built-in budget x truncation x attacker sweep. Never fails.
 */
struct GuardsimPlan *guardsim_plan_default_sweep(void);

/**
 * Releases a plan handle. Null is a no-op.
 *
 * # Safety
 * `plan` must be null or a pointer returned by a plan constructor that
 * has not been freed yet.
 */
void guardsim_plan_free(struct GuardsimPlan *plan);

/**
 * Overrides the base seed every stream is derived from.
 *
 * # Safety
 * `plan` must be a live plan handle.
 */
GuardsimStatus guardsim_plan_set_base_seed(struct GuardsimPlan *plan, uint64_t seed);

/**
 * Redirects the plan's output tree.
 *
 * # Safety
 * `plan` must be a live plan handle; `dir` a NUL-terminated string.
 */
GuardsimStatus guardsim_plan_set_output_dir(struct GuardsimPlan *plan, const char *dir);

/**
 * Number of runs the plan expands to.
 *
 * # Safety
 * `plan` must be a live plan handle; `out` a valid destination.
 */
GuardsimStatus guardsim_plan_run_count(const struct GuardsimPlan *plan, uintptr_t *out);

/**
 * Serializes the resolved plan as JSON.
 *
 * # Safety
 * `plan` must be a live plan handle; `out` a valid destination. Free the
 * result with `guardsim_string_free`.
 */
GuardsimStatus guardsim_plan_to_json(const struct GuardsimPlan *plan, char **out);

/**
 * Executes every run of the plan and writes the output tree. On success
 * `out` receives a JSON object with the run count and output paths.
 *
 * # Safety
 * `plan` must be a live plan handle; `out` a valid destination. Free the
 * result with `guardsim_string_free`.
 */
GuardsimStatus guardsim_plan_execute(const struct GuardsimPlan *plan, char **out);

/**
 * Runs one (cell, policy, replication) task in memory, without touching
 * the filesystem. On success `out` receives the run summary as JSON.
 *
 * # Safety
 * `plan` must be a live plan handle; `policy` a NUL-terminated string;
 * `out` a valid destination. Free the result with `guardsim_string_free`.
 */
GuardsimStatus guardsim_run_single(const struct GuardsimPlan *plan,
                                   const char *policy,
                                   uint32_t cell,
                                   uint32_t replication,
                                   char **out);

/**
 * Releases a string returned through an out-parameter. Null is a no-op.
 *
 * # Safety
 * `s` must be null or a string returned by this library that has not
 * been freed yet.
 */
void guardsim_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GUARDSIM_H */
