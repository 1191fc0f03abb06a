#ifndef MCTRACK_H
#define MCTRACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MctStatus {
  MCT_STATUS_OK = 0,
  MCT_STATUS_NULL_POINTER = 1,
  MCT_STATUS_INVALID_CONFIG = 2,
  MCT_STATUS_INVALID_DATA = 3,
  MCT_STATUS_RUNTIME = 4,
  /**
   * Output buffer too small; the required length was still written.
   */
  MCT_STATUS_BUFFER_TOO_SMALL = 5,
  MCT_STATUS_PANIC = 99,
} MctStatus;

/**
 * Opaque fuser with its cached ground-to-image lookup.
 */
typedef struct MctFuser MctFuser;

/**
 * Opaque online tracker.
 */
typedef struct MctTracker MctTracker;

typedef struct MctTrackerParams {
  /**
   * Gating radius d_L in meters.
   */
  double gate_radius;
  /**
   * Miss-edge cost as a fraction of the gating radius.
   */
  double miss_penalty_ratio;
  /**
   * Consecutive misses before a trajectory is retired.
   */
  uint32_t max_misses;
  /**
   * Non-zero to mix histogram similarity into the edge cost.
   */
  uint8_t use_color;
  double color_weight;
  double velocity_decay;
} MctTrackerParams;

/**
 * One exported trajectory state.
 */
typedef struct MctTrackRow {
  uint64_t id;
  double x;
  double y;
  /**
   * 1 when a detection was assigned this frame, 0 when coasting.
   */
  uint8_t matched;
} MctTrackRow;

/**
 * Ground grid description.
 */
typedef struct MctGrid {
  double origin_x;
  double origin_y;
  double cell_size;
  size_t rows;
  size_t cols;
} MctGrid;

/**
 * Peak found by [`mct_local_maxima`].
 */
typedef struct MctPeak {
  size_t row;
  size_t col;
  double score;
} MctPeak;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next `mct_*` call on the same thread.
 */
const char *mct_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mct_version(void);

struct MctTrackerParams mct_tracker_params_default(void);

/**
 * Creates a tracker. `include_coasted` non-zero also reports trajectories
 * that were not matched this frame.
 *
 * # Safety
 * `params` must point to a valid struct; `out` must be writable.
 */
enum MctStatus mct_tracker_new(const struct MctTrackerParams *params,
                               uint8_t include_coasted,
                               struct MctTracker **out);

/**
 * # Safety
 * `tracker` must be null or a handle from [`mct_tracker_new`] not yet freed.
 */
void mct_tracker_free(struct MctTracker *tracker);

/**
 * Advances the tracker by one frame.
 *
 * `xy` holds `n` interleaved ground positions (meters). With color on,
 * `histograms` holds `n * bins^3` normalized bins; otherwise pass null
 * and 0. Rows are written to `out` (capacity `cap`) and their count to
 * `out_len`; when `cap` is too small the step is still applied, `out_len`
 * receives the required count and `BufferTooSmall` is returned.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum MctStatus mct_tracker_step(struct MctTracker *tracker,
                                uint64_t frame,
                                const double *xy,
                                size_t n,
                                const double *histograms,
                                size_t bins,
                                struct MctTrackRow *out,
                                size_t cap,
                                size_t *out_len);

/**
 * Creates a fuser for `n` cameras. `homographies` holds `n` row-major 3×3
 * ground-to-image matrices; `widths`/`heights` the image sizes.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `out` must be writable.
 */
enum MctStatus mct_fuser_new(const double *homographies,
                             const size_t *widths,
                             const size_t *heights,
                             size_t n,
                             struct MctGrid grid,
                             struct MctFuser **out);

/**
 * # Safety
 * `fuser` must be null or a handle from [`mct_fuser_new`] not yet freed.
 */
void mct_fuser_free(struct MctFuser *fuser);

/**
 * Averages one row-major heatmap per camera onto the grid. `out` must hold
 * `rows * cols` values. `coverage`, if not null, receives the number of
 * cameras seeing each cell.
 *
 * # Safety
 * `heatmaps` must hold `n` pointers, each valid for its camera's
 * `width * height` values; `out` and `coverage` for `out_len` writes.
 */
enum MctStatus mct_fuser_fuse_average(const struct MctFuser *fuser,
                                      const double *const *heatmaps,
                                      size_t n,
                                      double *out,
                                      size_t out_len,
                                      uint16_t *coverage);

/**
 * Masked focal loss (mean over masked pixels) and its gradient with
 * respect to `pred`. All arrays hold `len` values; `grad` may be null.
 *
 * # Safety
 * Pointers must be valid for `len` elements; `loss` must be writable.
 */
enum MctStatus mct_focal_loss(const double *pred,
                              const double *target,
                              const double *mask,
                              size_t len,
                              double alpha,
                              double beta,
                              double *loss,
                              double *grad);

/**
 * Local maxima of a row-major `rows × cols` map, strongest first.
 * Semantics of `out`/`cap`/`out_len` follow [`mct_tracker_step`].
 *
 * # Safety
 * `values` must hold `rows * cols` elements; `out` `cap` elements.
 */
enum MctStatus mct_local_maxima(const double *values,
                                size_t rows,
                                size_t cols,
                                double min_score,
                                double min_separation_cells,
                                struct MctPeak *out,
                                size_t cap,
                                size_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCTRACK_H */
