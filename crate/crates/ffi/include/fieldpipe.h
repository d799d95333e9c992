#ifndef FIELDPIPE_H
#define FIELDPIPE_H

/* Generated by cbindgen from the fieldpipe-ffi sources. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum FpStatus {
  FP_STATUS_OK = 0,
  FP_STATUS_NULL_ARGUMENT = 1,
  FP_STATUS_INVALID_UTF8 = 2,
  FP_STATUS_XML = 3,
  FP_STATUS_VALIDATION = 4,
  FP_STATUS_MESH = 5,
  FP_STATUS_FORMAT = 6,
  FP_STATUS_IO = 7,
  FP_STATUS_FILTER = 8,
  FP_STATUS_NUMERIC = 9,
  FP_STATUS_NOT_FOUND = 10,
  FP_STATUS_BUFFER_TOO_SMALL = 11,
  FP_STATUS_PANIC = 12,
} FpStatus;

/**
 * Where a quantity is stored.
 */
typedef enum FpEntity {
  FP_ENTITY_NODE = 0,
  FP_ENTITY_CELL = 1,
} FpEntity;

/**
 * An opened native container.
 */
typedef struct FpContainer FpContainer;

/**
 * A validated pipeline ready to run.
 */
typedef struct FpPipeline FpPipeline;

/**
 * Shape of one quantity in a container.
 */
typedef struct FpQuantityInfo {
  enum FpEntity defined_on;
  /**
   * 1 or 3.
   */
  size_t components;
  /**
   * Non-zero for complex (frequency-domain) data stored as (re, im) pairs.
   */
  int32_t is_complex;
  /**
   * Doubles per step over all regions of the quantity.
   */
  size_t values_per_step;
  /**
   * Number of steps holding data.
   */
  size_t num_steps;
} FpQuantityInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *fp_version(void);

/**
 * Message of the last failed call on this thread, or null if the last call
 * succeeded. The pointer stays valid until the next call on this thread.
 */
const char *fp_last_error_message(void);

/**
 * Parses and validates the pipeline document at `path`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FpStatus fp_pipeline_load(const char *path, struct FpPipeline **out);

/**
 * Number of schedule entries the pipeline will process.
 *
 * # Safety
 * `pipeline` must be null or a handle from [`fp_pipeline_load`].
 */
size_t fp_pipeline_num_steps(const struct FpPipeline *pipeline);

/**
 * Executes the pipeline with `threads` workers (0 selects the default).
 * A pipeline can be run more than once; each run rewrites its outputs.
 *
 * # Safety
 * `pipeline` must be a handle from [`fp_pipeline_load`].
 */
enum FpStatus fp_pipeline_run(struct FpPipeline *pipeline, size_t threads);

/**
 * Releases a pipeline handle. Null is ignored.
 *
 * # Safety
 * `pipeline` must be null or a handle not yet freed.
 */
void fp_pipeline_free(struct FpPipeline *pipeline);

/**
 * Validates a pipeline document without keeping a handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum FpStatus fp_validate(const char *path);

/**
 * Writes the geometry of `input` (container or Ensight case) to a new
 * container at `output`.
 *
 * # Safety
 * Both arguments must be NUL-terminated strings.
 */
enum FpStatus fp_strip_mesh(const char *input, const char *output);

/**
 * Opens a native container for reading.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FpStatus fp_container_open(const char *path, struct FpContainer **out);

/**
 * Releases a container handle. Null is ignored.
 *
 * # Safety
 * `container` must be null or a handle not yet freed.
 */
void fp_container_free(struct FpContainer *container);

/**
 * # Safety
 * `container` must be null or a live handle.
 */
size_t fp_container_num_nodes(const struct FpContainer *container);

/**
 * # Safety
 * `container` must be null or a live handle.
 */
size_t fp_container_num_steps(const struct FpContainer *container);

/**
 * # Safety
 * `container` must be null or a live handle.
 */
size_t fp_container_num_quantities(const struct FpContainer *container);

/**
 * Step index and value of the `position`-th step.
 *
 * # Safety
 * `container` must be a live handle; `index` and `value` valid pointers.
 */
enum FpStatus fp_container_step(const struct FpContainer *container,
                                size_t position,
                                size_t *index,
                                double *value);

/**
 * Name of the `i`-th quantity. The string is owned by the container.
 *
 * # Safety
 * `container` must be null or a live handle.
 */
const char *fp_container_quantity_name(const struct FpContainer *container, size_t i);

/**
 * Shape of quantity `name`.
 *
 * # Safety
 * `container` must be a live handle, `name` a NUL-terminated string and
 * `info` a valid pointer.
 */
enum FpStatus fp_container_quantity_info(const struct FpContainer *container,
                                         const char *name,
                                         struct FpQuantityInfo *info);

/**
 * Copies quantity `name` at step index `step_index` into `buffer`, regions
 * concatenated in the order of the quantity's region list. `written`
 * receives the number of doubles required; if `capacity` is smaller,
 * nothing is copied and the buffer-too-small status is returned.
 *
 * # Safety
 * `container` must be a live handle, `name` a NUL-terminated string,
 * `buffer` valid for `capacity` doubles (may be null if `capacity` is 0)
 * and `written` a valid pointer.
 */
enum FpStatus fp_container_read_step(const struct FpContainer *container,
                                     const char *name,
                                     size_t step_index,
                                     double *buffer,
                                     size_t capacity,
                                     size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIELDPIPE_H */
