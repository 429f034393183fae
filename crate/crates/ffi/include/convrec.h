#ifndef CONVREC_H
#define CONVREC_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  CONVREC_STATUS_OK = 0,
  CONVREC_STATUS_NULL_POINTER = 1,
  CONVREC_STATUS_INVALID_UTF8 = 2,
  CONVREC_STATUS_INVALID_CATALOG = 3,
  CONVREC_STATUS_INVALID_ARGUMENT = 4,
  CONVREC_STATUS_UNKNOWN_ID = 5,
  CONVREC_STATUS_REPEATED_QUESTION = 6,
  CONVREC_STATUS_SESSION_FINISHED = 7,
  CONVREC_STATUS_BUFFER_TOO_SMALL = 8,
  CONVREC_STATUS_IO = 9,
  CONVREC_STATUS_INTERNAL = 10,
} ConvrecStatus;

typedef enum {
  CONVREC_MODEL_KIND_AUTO = 0,
  CONVREC_MODEL_KIND_PROPERTY_FREE = 1,
  CONVREC_MODEL_KIND_PROPERTIES = 2,
} ConvrecModelKind;

typedef enum {
  /**
   * A question is pending.
   */
  CONVREC_STOP_NONE = 0,
  CONVREC_STOP_THRESHOLD = 1,
  CONVREC_STOP_EXHAUSTED = 2,
  CONVREC_STOP_MAX_QUESTIONS = 3,
  CONVREC_STOP_CONTRADICTION = 4,
} ConvrecStop;

typedef struct ConvrecModel ConvrecModel;

typedef struct ConvrecSession ConvrecSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL.
 */
const char *convrec_last_error(void);

const char *convrec_version(void);

/**
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
ConvrecStatus convrec_model_from_json(const char *json, ConvrecModelKind kind, ConvrecModel **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
ConvrecStatus convrec_model_from_file(const char *path, ConvrecModelKind kind, ConvrecModel **out);

/**
 * # Safety
 * `model` must come from a `convrec_model_from_*` call, or be NULL.
 */
void convrec_model_free(ConvrecModel *model);

/**
 * # Safety
 * `model` must be a live model handle; NULL yields 0.
 */
size_t convrec_model_item_count(const ConvrecModel *model);

/**
 * # Safety
 * `model` must be a live model handle; NULL yields 0.
 */
size_t convrec_model_question_count(const ConvrecModel *model);

/**
 * Number of answers of a question, 0 when out of range.
 *
 * # Safety
 * `model` must be a live model handle.
 */
size_t convrec_model_answer_count(const ConvrecModel *model, size_t question);

/**
 * Item id, or NULL when out of range.
 *
 * # Safety
 * `model` must be a live model handle.
 */
const char *convrec_model_item_id(const ConvrecModel *model, size_t item);

/**
 * # Safety
 * `model` must be a live model handle.
 */
const char *convrec_model_question_id(const ConvrecModel *model, size_t question);

/**
 * # Safety
 * `model` must be a live model handle.
 */
const char *convrec_model_answer_id(const ConvrecModel *model, size_t question, size_t answer);

/**
 * Resolve a question and answer by id.
 *
 * # Safety
 * Strings must be NUL-terminated; out pointers valid.
 */
ConvrecStatus convrec_model_answer_ref(const ConvrecModel *model,
                                       const char *question_id,
                                       const char *answer_id,
                                       size_t *out_question,
                                       size_t *out_answer);

/**
 * Normalised entropy threshold that corresponds to `s` equally likely
 * items out of `n`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
ConvrecStatus convrec_stopping_threshold(size_t s, size_t n, double *out);

/**
 * Start a session. `stop_s` and `max_questions` of 0 mean unset; `soft`
 * skips contradictory answers instead of freezing the session.
 *
 * # Safety
 * `model` must be a live model handle and `out` a valid pointer. The
 * session keeps the model alive on its own.
 */
ConvrecStatus convrec_session_new(const ConvrecModel *model,
                                  size_t stop_s,
                                  size_t max_questions,
                                  bool soft,
                                  ConvrecSession **out);

/**
 * # Safety
 * `session` must come from `convrec_session_new`, or be NULL.
 */
void convrec_session_free(ConvrecSession *session);

/**
 * Choose the next question. On a stop, `out_stop` is set and
 * `out_question` is left untouched.
 *
 * # Safety
 * All pointers must be valid.
 */
ConvrecStatus convrec_session_next_question(const ConvrecSession *session,
                                            size_t *out_question,
                                            ConvrecStop *out_stop);

/**
 * Record an answer by index.
 *
 * # Safety
 * `session` must be a live session handle.
 */
ConvrecStatus convrec_session_answer(ConvrecSession *session, size_t question, size_t answer);

/**
 * Copy the item posterior into `out`, which must hold at least the item
 * count; `out_len` receives the item count either way.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
ConvrecStatus convrec_session_posterior(const ConvrecSession *session,
                                        double *out,
                                        size_t len,
                                        size_t *out_len);

/**
 * Normalised posterior entropy, NaN for a NULL handle.
 *
 * # Safety
 * `session` must be a live session handle.
 */
double convrec_session_entropy(const ConvrecSession *session);

/**
 * Number of items with positive posterior mass.
 *
 * # Safety
 * `session` must be a live session handle.
 */
size_t convrec_session_retained(const ConvrecSession *session);

/**
 * # Safety
 * `session` must be a live session handle.
 */
size_t convrec_session_answered(const ConvrecSession *session);

/**
 * # Safety
 * `session` must be a live session handle.
 */
bool convrec_session_contradiction(const ConvrecSession *session);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONVREC_H */
