#ifndef MSDD_H
#define MSDD_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MsddStatus {
  MSDD_STATUS_OK = 0,
  MSDD_STATUS_NULL_POINTER = 1,
  MSDD_STATUS_INVALID_ARGUMENT = 2,
  MSDD_STATUS_IO = 3,
  MSDD_STATUS_FORMAT = 4,
  MSDD_STATUS_SHAPE_MISMATCH = 5,
  MSDD_STATUS_INFEASIBLE = 6,
  MSDD_STATUS_EMPTY_REFERENCE = 7,
  MSDD_STATUS_PANIC = 8,
} MsddStatus;

/**
 * Pipeline configuration.
 */
typedef struct MsddConfig MsddConfig;

/**
 * Result of diarizing one session.
 */
typedef struct MsddDiarization MsddDiarization;

/**
 * Trained decoder parameters with their metadata.
 */
typedef struct MsddModel MsddModel;

/**
 * Multi-scale embeddings of one session.
 */
typedef struct MsddSession MsddSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the last failure on this thread; empty after a success.
 * The pointer stays valid until the next library call on this thread.
 */
const char *msdd_last_error(void);

/**
 * Library version as a static string.
 */
const char *msdd_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void msdd_string_free(char *s);

/**
 * Default configuration.
 *
 * # Safety
 * `out` must be writable.
 */
enum MsddStatus msdd_config_new(struct MsddConfig **out);

/**
 * Configuration parsed from a TOML document; environment overrides are not applied.
 *
 * # Safety
 * `toml` must be a nul-terminated string and `out` writable.
 */
enum MsddStatus msdd_config_from_toml(const char *toml, struct MsddConfig **out);

/**
 * Sets the decoder threshold, which must lie in (0, 1).
 *
 * # Safety
 * `cfg` must be a live configuration handle.
 */
enum MsddStatus msdd_config_set_threshold(struct MsddConfig *cfg, double threshold);

/**
 * Sets the clustering weight ratio between the coarsest and the base scale.
 *
 * # Safety
 * `cfg` must be a live configuration handle.
 */
enum MsddStatus msdd_config_set_weight_ratio(struct MsddConfig *cfg, double r);

/**
 * # Safety
 * `cfg` must be null or a handle from this library, freed once.
 */
void msdd_config_free(struct MsddConfig *cfg);

/**
 * Loads an embedding archive from its manifest path.
 *
 * # Safety
 * `manifest_path` must be a nul-terminated string and `out` writable.
 */
enum MsddStatus msdd_session_load(const char *manifest_path, struct MsddSession **out);

/**
 * Number of base-scale steps, or 0 for a null handle.
 *
 * # Safety
 * `session` must be null or a live session handle.
 */
size_t msdd_session_num_steps(const struct MsddSession *session);

/**
 * # Safety
 * `session` must be null or a handle from this library, freed once.
 */
void msdd_session_free(struct MsddSession *session);

/**
 * Loads a trained decoder checkpoint.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` writable.
 */
enum MsddStatus msdd_model_load(const char *path, struct MsddModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library, freed once.
 */
void msdd_model_free(struct MsddModel *model);

/**
 * Diarizes `session`; a null `model` selects clustering only.
 *
 * # Safety
 * `session` and `config` must be live handles, `model` null or live, `out` writable.
 */
enum MsddStatus msdd_diarize(const struct MsddSession *session,
                             const struct MsddConfig *config,
                             const struct MsddModel *model,
                             struct MsddDiarization **out);

/**
 * Estimated speaker count, or 0 for a null handle.
 *
 * # Safety
 * `d` must be null or a live diarization handle.
 */
size_t msdd_diarization_num_speakers(const struct MsddDiarization *d);

/**
 * Number of hypothesis segments, or 0 for a null handle.
 *
 * # Safety
 * `d` must be null or a live diarization handle.
 */
size_t msdd_diarization_num_segments(const struct MsddDiarization *d);

/**
 * Segment `index`; `speaker` receives the index of its label among the
 * sorted hypothesis speaker names.
 *
 * # Safety
 * `d` must be a live diarization handle and the output pointers writable.
 */
enum MsddStatus msdd_diarization_segment(const struct MsddDiarization *d,
                                         size_t index,
                                         double *onset,
                                         double *offset,
                                         size_t *speaker);

/**
 * Hypothesis as RTTM text; release with [`msdd_string_free`].
 *
 * # Safety
 * `d` must be a live diarization handle and `out` writable.
 */
enum MsddStatus msdd_diarization_rttm(const struct MsddDiarization *d, char **out);

/**
 * # Safety
 * `d` must be null or a handle from this library, freed once.
 */
void msdd_diarization_free(struct MsddDiarization *d);

/**
 * Pooled DER of RTTM texts; sessions missing from the hypothesis count as silent.
 *
 * # Safety
 * Both texts must be nul-terminated strings and `der` writable.
 */
enum MsddStatus msdd_score_rttm(const char *reference,
                                const char *hypothesis,
                                double collar,
                                bool ignore_overlap,
                                double *der);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSDD_H */
