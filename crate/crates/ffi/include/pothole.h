#ifndef POTHOLE_H
#define POTHOLE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Track id written for detections that no track claimed.
#define POTHOLE_NO_TRACK 0

typedef enum PotholeStatus {
  POTHOLE_STATUS_OK = 0,
  POTHOLE_STATUS_NULL_POINTER = 1,
  POTHOLE_STATUS_INVALID_ARGUMENT = 2,
  POTHOLE_STATUS_NO_VALID_DEPTH = 3,
  POTHOLE_STATUS_EMPTY_REGION = 4,
  POTHOLE_STATUS_IO = 5,
  POTHOLE_STATUS_FORMAT = 6,
  POTHOLE_STATUS_OUT_OF_ORDER = 7,
  POTHOLE_STATUS_INTERNAL = 8,
} PotholeStatus;

typedef enum PotholeNoiseMode {
  POTHOLE_NOISE_MODE_CONFIDENCE_ONLY = 0,
  POTHOLE_NOISE_MODE_DISTANCE_ONLY = 1,
  POTHOLE_NOISE_MODE_COMBINED = 2,
} PotholeNoiseMode;

// Confidence and distance aware area smoother for one track.
typedef struct PotholeAreaFilter PotholeAreaFilter;

// Metric depth map.
typedef struct PotholeDepthMap PotholeDepthMap;

// Multi-object tracker with default settings.
typedef struct PotholeTracker PotholeTracker;

typedef struct PotholeIntrinsics {
  double f_u;
  double f_v;
  double p_u;
  double p_v;
  size_t width;
  size_t height;
} PotholeIntrinsics;

// Corner-form box in pixels.
typedef struct PotholeBox {
  double x;
  double y;
  double w;
  double h;
} PotholeBox;

typedef struct PotholeAreaEstimate {
  double area_m2;
  double distance_m;
  double valid_patch_fraction;
  size_t valid_patch_count;
  size_t total_patch_count;
} PotholeAreaEstimate;

typedef struct PotholeCdkfConfig {
  double lambda;
  double theta;
  double d0;
  double q;
  enum PotholeNoiseMode mode;
} PotholeCdkfConfig;

typedef struct PotholeDetection {
  uint32_t class_id;
  struct PotholeBox bbox;
  double confidence;
} PotholeDetection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
// The pointer stays valid until the next call on the same thread.
const char *pothole_last_error(void);

// Library version as a static NUL-terminated string.
const char *pothole_version(void);

// Copies `width * height` row-major depths in meters. Zero and non-finite
// values mark holes.
//
// # Safety
// `values` must point to `width * height` readable doubles and `out` to a
// writable handle slot.
enum PotholeStatus pothole_depth_new(size_t width,
                                     size_t height,
                                     const double *values,
                                     struct PotholeDepthMap **out);

// Reads a grayscale PFM depth file.
//
// # Safety
// `path` must be a NUL-terminated UTF-8 string and `out` a writable slot.
enum PotholeStatus pothole_depth_read_pfm(const char *path, struct PotholeDepthMap **out);

// # Safety
// `depth` must be a live handle; `width` and `height` may be null.
enum PotholeStatus pothole_depth_size(const struct PotholeDepthMap *depth,
                                      size_t *width,
                                      size_t *height);

// # Safety
// `depth` must be null or a handle from this library, freed at most once.
void pothole_depth_free(struct PotholeDepthMap *depth);

// Metric area of the region inside one detection box.
//
// # Safety
// All pointers must be valid; `out` must be writable.
enum PotholeStatus pothole_estimate_area(const struct PotholeDepthMap *depth,
                                         const struct PotholeIntrinsics *intrinsics,
                                         const struct PotholeBox *bbox,
                                         double confidence,
                                         struct PotholeAreaEstimate *out);

// Default smoother settings.
struct PotholeCdkfConfig pothole_cdkf_config_default(void);

// # Safety
// `config` must be readable and `out` a writable slot.
enum PotholeStatus pothole_area_filter_new(const struct PotholeCdkfConfig *config,
                                           struct PotholeAreaFilter **out);

// Feeds one area measurement with its confidence and distance. Writes the
// smoothed area and the normalized innovation squared, which is NaN on the
// first measurement.
//
// # Safety
// `filter` must be a live handle; `smoothed` and `nis` may be null.
enum PotholeStatus pothole_area_filter_observe(struct PotholeAreaFilter *filter,
                                               double area_m2,
                                               double confidence,
                                               double distance_m,
                                               double *smoothed,
                                               double *nis);

// # Safety
// `filter` must be null or a handle from this library, freed at most once.
void pothole_area_filter_free(struct PotholeAreaFilter *filter);

// # Safety
// `out` must be a writable slot.
enum PotholeStatus pothole_tracker_new(struct PotholeTracker **out);

// Advances the tracker by one frame. `motion` is an optional row-major 3x3
// transform from the previous frame to this one. `track_ids` receives one id
// per detection, [`POTHOLE_NO_TRACK`] where none was assigned.
//
// # Safety
// `dets` must hold `n` readable detections (or be null when `n` is 0),
// `motion` must be null or hold 9 doubles, and `track_ids` must hold `n`
// writable slots.
enum PotholeStatus pothole_tracker_step(struct PotholeTracker *tracker,
                                        uint64_t frame,
                                        const struct PotholeDetection *dets,
                                        size_t n,
                                        const double *motion,
                                        uint64_t *track_ids);

// Number of live tracks, tentative ones included.
//
// # Safety
// `tracker` must be a live handle and `count` writable.
enum PotholeStatus pothole_tracker_track_count(const struct PotholeTracker *tracker, size_t *count);

// # Safety
// `tracker` must be null or a handle from this library, freed at most once.
void pothole_tracker_free(struct PotholeTracker *tracker);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POTHOLE_H */
