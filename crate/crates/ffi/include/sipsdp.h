#ifndef SIPSDP_H
#define SIPSDP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum SipsdpStatus {
  SIPSDP_STATUS_OK = 0,
  SIPSDP_STATUS_NULL_POINTER = 1,
  SIPSDP_STATUS_INVALID_UTF8 = 2,
  SIPSDP_STATUS_PARSE = 3,
  SIPSDP_STATUS_INVALID_ARGUMENT = 4,
  SIPSDP_STATUS_PRECONDITION = 5,
  // A solve did not reach an optimal answer.
  SIPSDP_STATUS_SOLVER_FAILURE = 6,
  SIPSDP_STATUS_PANIC = 7,
} SipsdpStatus;

// Opaque problem handle.
typedef struct SipsdpProblem SipsdpProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Parse a JSON problem file. On success `*out` holds a handle to release
// with `sipsdp_problem_free`.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum SipsdpStatus sipsdp_problem_from_json(const char *json, struct SipsdpProblem **out);

// Release a problem handle. Null is ignored.
//
// # Safety
// `p` must come from `sipsdp_problem_from_json` and not be used afterwards.
void sipsdp_problem_free(struct SipsdpProblem *p);

// Number of x and y variables.
//
// # Safety
// All pointers must be valid.
enum SipsdpStatus sipsdp_problem_dims(const struct SipsdpProblem *p, size_t *m, size_t *n);

// Run the hierarchy at `(r, t)` and return the JSON report in `*out_json`.
// `t == 0` selects the file's schedule or the default one; `r == 0` with
// `t > 0` picks the smallest admissible `r`. Timings are omitted. The
// report is returned also when a solve fails, with status
// `SIPSDP_STATUS_SOLVER_FAILURE`.
//
// # Safety
// `p` must be a live handle and `out_json` a valid pointer.
enum SipsdpStatus sipsdp_solve(const struct SipsdpProblem *p,
                               uint32_t r,
                               uint32_t t,
                               char **out_json);

// Support function of `Lambda_{r,t}` in direction `a` (length `m`).
// Writes the value and the maximizing point (length `m`).
//
// # Safety
// `a` and `out_point` must hold `len` doubles; `out_value` must be valid.
enum SipsdpStatus sipsdp_support_value(const struct SipsdpProblem *p,
                                       const double *a,
                                       size_t len,
                                       uint32_t r,
                                       uint32_t t,
                                       double *out_value,
                                       double *out_point);

// Whether the objective is s.o.s-convex.
//
// # Safety
// `p` must be a live handle and `out` valid.
enum SipsdpStatus sipsdp_is_sos_convex_objective(const struct SipsdpProblem *p, bool *out);

// `eps*_r` of the objective on `[-1, 1]^m`.
//
// # Safety
// `p` must be a live handle and `out` valid.
enum SipsdpStatus sipsdp_eps_star_objective(const struct SipsdpProblem *p, uint32_t r, double *out);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void sipsdp_string_free(char *s);

// Message of the last failed call on this thread, or null. Valid until the
// next call into the library on the same thread.
const char *sipsdp_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIPSDP_H */
