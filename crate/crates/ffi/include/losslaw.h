#ifndef LOSSLAW_H
#define LOSSLAW_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LosslawStatus {
  LOSSLAW_STATUS_OK = 0,
  LOSSLAW_STATUS_VALIDATION = 1,
  LOSSLAW_STATUS_NUMERICAL = 2,
  LOSSLAW_STATUS_DOMAIN = 3,
  LOSSLAW_STATUS_NULL_POINTER = 4,
  LOSSLAW_STATUS_INVALID_UTF8 = 5,
  LOSSLAW_STATUS_PANIC = 6,
} LosslawStatus;

typedef enum LosslawForm {
  LOSSLAW_FORM_PAPER_EQ4 = 0,
  LOSSLAW_FORM_CHINCHILLA_EQ1 = 1,
} LosslawForm;

/**
 * Opaque scaling law.
 */
typedef struct LosslawLaw LosslawLaw;

/**
 * Opaque loss-to-loss link.
 */
typedef struct LosslawLink LosslawLink;

typedef struct LosslawLawParams {
  enum LosslawForm form;
  double e;
  double a;
  double b;
  double alpha;
  double beta;
} LosslawLawParams;

typedef struct LosslawLinkParams {
  double k;
  double kappa;
  double shift_x;
  double shift_y;
} LosslawLinkParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into this library on the same thread.
 */
const char *losslaw_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *losslaw_version(void);

/**
 * Build a law. `PaperEq4` is `E + ((A/N)^(alpha/beta) + B/D)^beta`,
 * `ChinchillaEq1` is `E + A/N^alpha + B/D^beta`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum LosslawStatus losslaw_law_new(enum LosslawForm form,
                                   double e,
                                   double a,
                                   double b,
                                   double alpha,
                                   double beta,
                                   struct LosslawLaw **out);

/**
 * Parse a law from JSON: either a saved document or the bare law object.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum LosslawStatus losslaw_law_from_json(const char *json, struct LosslawLaw **out);

/**
 * Serialize a law as JSON. Release the string with [`losslaw_string_free`].
 *
 * # Safety
 * `law` must be a live handle; `out` must be writable.
 */
enum LosslawStatus losslaw_law_to_json(const struct LosslawLaw *law, char **out);

/**
 * # Safety
 * `law` must be a live handle; `out` must be writable.
 */
enum LosslawStatus losslaw_law_params(const struct LosslawLaw *law, struct LosslawLawParams *out);

/**
 * Predicted loss of an `n_params`-parameter model trained on `n_tokens` tokens.
 *
 * # Safety
 * `law` must be a live handle; `out` must be writable.
 */
enum LosslawStatus losslaw_law_predict(const struct LosslawLaw *law,
                                       uint64_t n_params,
                                       uint64_t n_tokens,
                                       double *out);

/**
 * Compute-optimal model size at a FLOP budget (translatable form only).
 *
 * # Safety
 * `law` must be a live handle; `out` must be writable.
 */
enum LosslawStatus losslaw_law_optimal_model_size(const struct LosslawLaw *law,
                                                  double flop_budget,
                                                  double *out);

/**
 * Fit a law to `len` runs with the default multi-start configuration.
 *
 * # Safety
 * The three arrays must each hold `len` elements; `out` must be writable.
 */
enum LosslawStatus losslaw_law_fit(enum LosslawForm form,
                                   const uint64_t *n_params,
                                   const uint64_t *n_tokens,
                                   const double *loss,
                                   size_t len,
                                   struct LosslawLaw **out);

/**
 * # Safety
 * `law` must be null or a handle not yet freed.
 */
void losslaw_law_free(struct LosslawLaw *law);

/**
 * Build a link `y = K (x - shift_x)^kappa + shift_y`.
 *
 * Endpoints are `DATASET:NAME/SPLIT` strings; null selects `source:loss/train`
 * and `target:loss/train`.
 *
 * # Safety
 * Non-null strings must be NUL-terminated; `out` must be writable.
 */
enum LosslawStatus losslaw_link_new(double k,
                                    double kappa,
                                    double shift_x,
                                    double shift_y,
                                    const char *source,
                                    const char *target,
                                    struct LosslawLink **out);

/**
 * Fit a link to `len` paired losses. A NaN `shift_y` fits the target shift freely.
 *
 * # Safety
 * `loss_x` and `loss_y` must hold `len` elements; non-null strings must be
 * NUL-terminated; `out` must be writable.
 */
enum LosslawStatus losslaw_link_fit(const double *loss_x,
                                    const double *loss_y,
                                    size_t len,
                                    double shift_x,
                                    double shift_y,
                                    const char *source,
                                    const char *target,
                                    struct LosslawLink **out);

/**
 * # Safety
 * `link` must be a live handle; `out` must be writable.
 */
enum LosslawStatus losslaw_link_params(const struct LosslawLink *link,
                                       struct LosslawLinkParams *out);

/**
 * # Safety
 * `link` must be a live handle; `out` must be writable.
 */
enum LosslawStatus losslaw_link_apply(const struct LosslawLink *link, double loss_x, double *out);

/**
 * Carry a law through a link whose `shift_x` equals the law's entropy.
 *
 * # Safety
 * `law` and `link` must be live handles; `out` must be writable.
 */
enum LosslawStatus losslaw_translate_law(const struct LosslawLaw *law,
                                         const struct LosslawLink *link,
                                         struct LosslawLaw **out);

/**
 * Chain `first` then `second`.
 *
 * # Safety
 * Both links must be live handles; `out` must be writable.
 */
enum LosslawStatus losslaw_compose_links(const struct LosslawLink *first,
                                         const struct LosslawLink *second,
                                         struct LosslawLink **out);

/**
 * # Safety
 * `link` must be null or a handle not yet freed.
 */
void losslaw_link_free(struct LosslawLink *link);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void losslaw_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOSSLAW_H */
