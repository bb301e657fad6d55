/* C interface to the gradus graded code-search supervision pipeline. */

#ifndef GRADUS_H
#define GRADUS_H

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Bumped on any breaking change to this interface.
#define GRADUS_ABI_VERSION 1

// Outcome of a fallible call.
typedef enum GradusStatus {
  // Success.
  GRADUS_STATUS_OK = 0,
  // A required pointer argument was null.
  GRADUS_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  GRADUS_STATUS_INVALID_UTF8 = 2,
  // The configuration failed validation or could not be parsed.
  GRADUS_STATUS_INVALID_CONFIG = 3,
  // An argument value was rejected.
  GRADUS_STATUS_INVALID_ARGUMENT = 4,
  // A required stage input artifact is missing.
  GRADUS_STATUS_MISSING_INPUT = 5,
  // A filesystem or serialization error.
  GRADUS_STATUS_IO = 6,
  // A remote backend failed after retries.
  GRADUS_STATUS_BACKEND = 7,
  // Another process holds the working-directory lock.
  GRADUS_STATUS_LOCKED = 8,
  // A model checkpoint was malformed.
  GRADUS_STATUS_CHECKPOINT = 9,
  // The operation had no data to work on.
  GRADUS_STATUS_NO_DATA = 10,
  // The provided output buffer is too small.
  GRADUS_STATUS_BUFFER_TOO_SMALL = 11,
  // An internal numerical error.
  GRADUS_STATUS_INTERNAL = 12,
} GradusStatus;

// Opaque pipeline configuration handle.
typedef struct GradusConfig GradusConfig;

// Opaque trained-encoder handle.
typedef struct GradusModel GradusModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version of this interface; compare against `GRADUS_ABI_VERSION`.
uint32_t gradus_abi_version(void);

// Message describing the most recent failure on the calling thread.
//
// The pointer stays valid until the next failing `gradus_*` call on the
// same thread. Never null; empty string when no failure has occurred.
const char *gradus_last_error(void);

// Fresh configuration with reference defaults. Never fails.
struct GradusConfig *gradus_config_default(void);

// Load and validate a TOML configuration file. Null on failure.
//
// # Safety
// `path` must be a NUL-terminated string.
struct GradusConfig *gradus_config_load(const char *path);

// Release a configuration handle. Null is ignored.
//
// # Safety
// `cfg` must be null or a pointer from a `gradus_config_*` constructor,
// not freed before.
void gradus_config_free(struct GradusConfig *cfg);

// Override the root seed.
//
// # Safety
// `cfg` must be a live configuration handle.
enum GradusStatus gradus_config_set_seed(struct GradusConfig *cfg, uint64_t seed);

// Point the configuration at a corpus directory and a working directory.
//
// # Safety
// `cfg` must be a live configuration handle; both paths must be
// NUL-terminated strings.
enum GradusStatus gradus_config_set_paths(struct GradusConfig *cfg,
                                          const char *corpus_dir,
                                          const char *work_dir);

// Run one pipeline stage by name (`ingest`, `docgen`, `mine`, `annotate`,
// `refine`, `train`, `eval`, `grid`, or `mds`). Stages that are already up
// to date are skipped; that still counts as success.
//
// # Safety
// `cfg` must be a live configuration handle; `stage` must be a
// NUL-terminated string.
enum GradusStatus gradus_run_stage(const struct GradusConfig *cfg,
                                   const char *stage,
                                   bool strict,
                                   bool offline);

// Write the bundled synthetic corpus under `dest`.
//
// # Safety
// `dest` must be a NUL-terminated string.
enum GradusStatus gradus_synth_corpus(const char *dest,
                                      size_t repos,
                                      size_t funcs_per_repo,
                                      uint64_t seed);

// Load a trained encoder checkpoint. Null on failure.
//
// # Safety
// `path` must be a NUL-terminated string.
struct GradusModel *gradus_model_load(const char *path);

// Release a model handle. Null is ignored.
//
// # Safety
// `model` must be null or a pointer from `gradus_model_load`, not freed
// before.
void gradus_model_free(struct GradusModel *model);

// Embedding width of a loaded model; 0 if `model` is null.
//
// # Safety
// `model` must be null or a live model handle.
size_t gradus_model_embed_dim(const struct GradusModel *model);

// Encode `text` into `out`, a caller-owned buffer of at least
// `gradus_model_embed_dim` doubles. The embedding has unit length.
//
// # Safety
// `model` must be a live model handle, `text` a NUL-terminated string, and
// `out` writable for `out_len` doubles.
enum GradusStatus gradus_model_encode(const struct GradusModel *model,
                                      const char *text,
                                      double *out,
                                      size_t out_len);

// Cosine similarity of two texts under the model, written to `out`.
//
// # Safety
// `model` must be a live model handle, `a` and `b` NUL-terminated strings,
// and `out` writable for one double.
enum GradusStatus gradus_model_similarity(const struct GradusModel *model,
                                          const char *a,
                                          const char *b,
                                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRADUS_H */
