#ifndef HMOT_H
#define HMOT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define HMOT_MODE_2D 2

#define HMOT_MODE_3D 3

#define HMOT_CAMERA_NONE 0

#define HMOT_CAMERA_FRONT 1

#define HMOT_CAMERA_FRONT_LEFT 2

#define HMOT_CAMERA_FRONT_RIGHT 3

#define HMOT_CAMERA_SIDE_LEFT 4

#define HMOT_CAMERA_SIDE_RIGHT 5

#define HMOT_CLASS_VEHICLE 0

#define HMOT_CLASS_PEDESTRIAN 1

#define HMOT_CLASS_CYCLIST 2

/**
 * Result code of every fallible call.
 */
typedef enum HmotStatus {
  HMOT_STATUS_OK = 0,
  HMOT_STATUS_NULL_POINTER = 1,
  HMOT_STATUS_INVALID_ARGUMENT = 2,
  HMOT_STATUS_CONFIG = 3,
  HMOT_STATUS_NUMERIC_FAILURE = 4,
  HMOT_STATUS_PANIC = 5,
} HmotStatus;

/**
 * Opaque tracker handle.
 */
typedef struct HmotTracker HmotTracker;

/**
 * One input detection. `values` holds `cx, cy, w, h` in 2D (the remaining
 * entries are ignored) or `cx, cy, cz, h, w, l, theta` in 3D. `embedding`
 * may be null when `embedding_len` is 0; it must be unit-norm otherwise.
 */
typedef struct HmotDetection {
  double values[7];
  double score;
  uint32_t class_id;
  const double *embedding;
  size_t embedding_len;
} HmotDetection;

/**
 * One emitted track; `values` follows the layout of [`HmotDetection`].
 */
typedef struct HmotTrackOutput {
  uint64_t track_id;
  double values[7];
  double score;
  uint32_t class_id;
} HmotTrackOutput;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a tracker. `mode` is `HMOT_MODE_2D` or `HMOT_MODE_3D`; a 2D
 * tracker needs a camera other than `HMOT_CAMERA_NONE`, a 3D tracker takes
 * `HMOT_CAMERA_NONE`. `config_json` may be null for the tuned defaults.
 *
 * # Safety
 * `config_json` must be null or a NUL-terminated string; `out` must be a
 * valid pointer.
 */
enum HmotStatus hmot_tracker_new(uint32_t mode,
                                 uint32_t camera,
                                 const char *config_json,
                                 struct HmotTracker **out);

/**
 * Releases a tracker; null is ignored.
 *
 * # Safety
 * `tracker` must come from `hmot_tracker_new` and not be used afterwards.
 */
void hmot_tracker_free(struct HmotTracker *tracker);

/**
 * Processes one frame. On success `*out_tracks` points to `*out_len` emitted
 * tracks owned by the handle and valid until the next step or free.
 *
 * # Safety
 * `dets` must point to `n` detections (or be null with `n == 0`); the out
 * pointers must be valid.
 */
enum HmotStatus hmot_tracker_step(struct HmotTracker *tracker,
                                  const struct HmotDetection *dets,
                                  size_t n,
                                  const struct HmotTrackOutput **out_tracks,
                                  size_t *out_len);

/**
 * Matches per association stage in the last frame.
 *
 * # Safety
 * `tracker` must be a live handle and `out` must point to three values.
 */
enum HmotStatus hmot_tracker_stage_matches(const struct HmotTracker *tracker, size_t *out);

/**
 * Number of live tracks, or 0 for a null handle.
 *
 * # Safety
 * `tracker` must be null or a live handle.
 */
size_t hmot_tracker_live_tracks(const struct HmotTracker *tracker);

/**
 * IoU of two `cx, cy, w, h` boxes.
 *
 * # Safety
 * `a` and `b` must point to four values, `out` to one.
 */
enum HmotStatus hmot_iou_2d(const double *a, const double *b, double *out);

/**
 * Bird's-eye-view IoU of two `cx, cy, cz, h, w, l, theta` boxes.
 *
 * # Safety
 * `a` and `b` must point to seven values, `out` to one.
 */
enum HmotStatus hmot_bev_iou(const double *a, const double *b, double *out);

/**
 * Gaussian-kernel center distance of two 3D boxes.
 *
 * # Safety
 * `a` and `b` must point to seven values, `out` to one.
 */
enum HmotStatus hmot_gauss_center_dist(const double *a, const double *b, double sigma, double *out);

/**
 * Message of the last failed call on this thread, or null. The string stays
 * valid until the next failing call on the same thread.
 */
const char *hmot_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hmot_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HMOT_H */
