#ifndef MCQLEAK_H
#define MCQLEAK_H

/* Generated by cbindgen from mcqleak-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for fallible calls.
 */
typedef enum McqleakStatus {
  MCQLEAK_STATUS_OK = 0,
  MCQLEAK_STATUS_NULL_ARGUMENT = 1,
  MCQLEAK_STATUS_INVALID_UTF8 = 2,
  MCQLEAK_STATUS_INVALID_ARGUMENT = 3,
  MCQLEAK_STATUS_IO = 4,
  MCQLEAK_STATUS_GATEWAY = 5,
  MCQLEAK_STATUS_INTERNAL = 6,
} McqleakStatus;

/**
 * Opaque dataset handle.
 */
typedef struct McqleakDataset McqleakDataset;

/**
 * Opaque gateway handle.
 */
typedef struct McqleakGateway McqleakGateway;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of the underlying engine, as a static string.
 */
const char *mcqleak_version(void);

/**
 * Message for the most recent failure on this thread, or null.
 * Valid until the next mcqleak call on the same thread.
 */
const char *mcqleak_last_error(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `ptr` must have been returned by an mcqleak function and not freed yet.
 */
void mcqleak_string_free(char *ptr);

/**
 * Load a line-delimited dataset. `format` is `mmlu-like` or
 * `hellaswag-like`. Returns null on failure.
 *
 * # Safety
 * `path` and `format` must be valid NUL-terminated strings.
 */
struct McqleakDataset *mcqleak_dataset_load(const char *path, const char *format);

/**
 * Number of instances in the dataset; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be a live handle from `mcqleak_dataset_load` or null.
 */
size_t mcqleak_dataset_len(const struct McqleakDataset *dataset);

/**
 * Release a dataset handle.
 *
 * # Safety
 * `dataset` must be a handle from `mcqleak_dataset_load`, not yet freed.
 */
void mcqleak_dataset_free(struct McqleakDataset *dataset);

/**
 * Open a deterministic contaminated mock gateway. `spec_json` holds a
 * contamination spec (`{}` for defaults); memorized ids are resolved
 * against `dataset`. Returns null on failure.
 *
 * # Safety
 * `dataset` must be a live dataset handle; `spec_json` a valid string.
 */
struct McqleakGateway *mcqleak_mock_gateway_open(const struct McqleakDataset *dataset,
                                                 const char *spec_json);

/**
 * Open a wire gateway against a completion endpoint. `auth_token` may be
 * null. Returns null on failure.
 *
 * # Safety
 * `endpoint` and `model` must be valid strings; `auth_token` valid or null.
 */
struct McqleakGateway *mcqleak_wire_gateway_open(const char *endpoint,
                                                 const char *model,
                                                 const char *auth_token);

/**
 * Release a gateway handle.
 *
 * # Safety
 * `gateway` must be a handle from a gateway `_open` call, not yet freed.
 */
void mcqleak_gateway_free(struct McqleakGateway *gateway);

/**
 * LCS-based similarity between a reference and a hypothesis, in [0, 1].
 *
 * # Safety
 * `reference` and `hypothesis` must be valid strings; `out` non-null.
 */
enum McqleakStatus mcqleak_rouge_l(const char *reference, const char *hypothesis, double *out);

/**
 * Run one detector on one instance; returns the verdict as a JSON string
 * (caller frees it) or null on failure. `config_json` may be null for
 * defaults.
 *
 * # Safety
 * Handles must be live; string arguments valid (or null where allowed).
 */
char *mcqleak_detect_instance(const struct McqleakDataset *dataset,
                              const struct McqleakGateway *gateway,
                              const char *instance_id,
                              const char *method,
                              const char *config_json);

/**
 * Run a comma-separated list of detectors over the whole dataset and
 * write one verdict JSON object per line to `out_path`.
 *
 * # Safety
 * Handles must be live; string arguments valid (or null where allowed).
 */
enum McqleakStatus mcqleak_detect_to_file(const struct McqleakDataset *dataset,
                                          const struct McqleakGateway *gateway,
                                          const char *methods,
                                          const char *config_json,
                                          const char *out_path);

/**
 * Run the desk-scale contamination simulation with a mock model built
 * from `spec_json` and return the detection report as a JSON string;
 * null on failure.
 *
 * # Safety
 * `dataset` must be a live handle; `spec_json` a valid string.
 */
char *mcqleak_simulate(const struct McqleakDataset *dataset,
                       const char *spec_json,
                       size_t total,
                       uint64_t seed);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* MCQLEAK_H */
