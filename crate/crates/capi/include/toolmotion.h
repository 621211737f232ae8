/* C interface for the tool-motion skill-assessment pipeline.
 *
 * Status codes: 0 ok, 2 input/schema error, 3 empty result, 4 numeric
 * failure. Functions returning pointers yield NULL on failure; call
 * tm_last_error() for a message (thread-local, valid until the next
 * failing call on the same thread).
 */

#ifndef TOOLMOTION_H
#define TOOLMOTION_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define TM_OK 0
#define TM_ERR_INPUT 2
#define TM_ERR_EMPTY 3
#define TM_ERR_NUMERIC 4

/* Opaque handles. */
typedef struct TmTrial TmTrial;
typedef struct TmResult TmResult;

/* Message for the most recent error on this thread; never NULL. */
const char *tm_last_error(void);

/* Load a trial bundle directory (cottle.csv, optional head.csv, meta.json).
 * Returns NULL on failure. */
TmTrial *tm_trial_open(const char *path);

/* Release a trial handle. NULL is a no-op. */
void tm_trial_free(TmTrial *trial);

/* Run the full pipeline (calibration, registration, head compensation,
 * stroke segmentation, features) with default configuration and the given
 * seed. Returns NULL on failure. */
TmResult *tm_process(const TmTrial *trial, uint64_t seed);

/* Release a result handle. NULL is a no-op. */
void tm_result_free(TmResult *result);

/* Number of operators summarized in a result, or -1 on error. */
int tm_result_operator_count(const TmResult *result);

/* Copy operator `index`'s id into buf (NUL-terminated, truncated to
 * buf_len). Returns the full id length in bytes, or -1 on error. */
int tm_result_operator_id(const TmResult *result, int index, char *buf,
                          size_t buf_len);

/* Fetch operator `index`'s features into out[4] = {scc, sdc, cr, n_strokes}.
 * Returns TM_OK, TM_ERR_EMPTY if every sub-trial of that operator was
 * excluded, or TM_ERR_INPUT. */
int tm_result_features(const TmResult *result, int index, double *out);

/* Pivot calibration from n poses given as scalar-first quaternions
 * (quats_wxyz, 4n doubles) and translations (trans_xyz, 3n doubles, mm).
 * Writes the tool-tip offset into out_offset[3]. Returns TM_OK,
 * TM_ERR_INPUT, or TM_ERR_NUMERIC for degenerate motion. */
int tm_pivot_calibrate(size_t n, const double *quats_wxyz,
                       const double *trans_xyz, double *out_offset);

#ifdef __cplusplus
}
#endif

#endif /* TOOLMOTION_H */
