#ifndef USC_H
#define USC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UscStatus {
  USC_STATUS_OK = 0,
  USC_STATUS_NULL_POINTER = 1,
  USC_STATUS_INVALID_ARGUMENT = 2,
  // The score is undefined for this pair, e.g. a box behind the vehicle.
  USC_STATUS_UNDEFINED = 3,
  USC_STATUS_PARSE_ERROR = 4,
  USC_STATUS_SCHEMA_ERROR = 5,
  USC_STATUS_IO_ERROR = 6,
  USC_STATUS_OUT_OF_RANGE = 7,
  USC_STATUS_PANIC = 8,
} UscStatus;

// Opaque evaluation and loss configuration.
typedef struct UscConfig UscConfig;

// Opaque dataset handle.
typedef struct UscDataset UscDataset;

// Opaque metrics report.
typedef struct UscReport UscReport;

// Box in the vehicle frame: x right, y down, z forward, meters and radians.
// `length` runs along x, `height` along y and `width` along z at zero yaw.
typedef struct UscBox {
  double x;
  double y;
  double z;
  double length;
  double height;
  double width;
  double yaw;
} UscBox;

typedef struct UscScore {
  bool pv_constraint;
  bool bev_constraint;
  bool verdict;
  double iogt_pv;
  double adr;
  double usc;
} UscScore;

typedef struct UscLossConfig {
  double lambda;
  double smooth_l1_beta;
  bool wrap_yaw;
} UscLossConfig;

// Summary scores; NaN marks a value undefined for lack of data.
typedef struct UscSummary {
  double mean_ap;
  double nds;
  double mausc;
  double usc_nds;
} UscSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL after a
// success. Valid until the next call into this library on the same thread.
const char *usc_last_error_message(void);

// 3D intersection over union.
//
// # Safety
// `p` and `g` must point to valid boxes and `result` to writable memory.
enum UscStatus usc_iou3d(const struct UscBox *p, const struct UscBox *g, double *result);

// 3D intersection over the ground-truth volume.
//
// # Safety
// As for [`usc_iou3d`].
enum UscStatus usc_iogt3d(const struct UscBox *p, const struct UscBox *g, double *result);

// Constraint verdicts and USC score of prediction `p` against `g`.
//
// # Safety
// As for [`usc_iou3d`].
enum UscStatus usc_score(const struct UscBox *p,
                         const struct UscBox *g,
                         double focal,
                         struct UscScore *result);

struct UscLossConfig usc_loss_config_default(void);

// Blended SmoothL1 and IoGT loss. A NULL `config` selects the defaults.
//
// # Safety
// As for [`usc_iou3d`]; `config` may be NULL.
enum UscStatus usc_safety_loss(const struct UscBox *p,
                               const struct UscBox *g,
                               const struct UscLossConfig *config,
                               double *result);

// Loads a JSON-lines dataset.
//
// # Safety
// `path` must be a nul-terminated string and `dataset` writable.
enum UscStatus usc_dataset_load(const char *path, struct UscDataset **dataset);

// # Safety
// `dataset` must be a live handle and `count` writable.
enum UscStatus usc_dataset_frame_count(const struct UscDataset *dataset, size_t *count);

// # Safety
// `dataset` must be NULL or a handle not yet freed.
void usc_dataset_free(struct UscDataset *dataset);

// # Safety
// `config` must be writable.
enum UscStatus usc_config_default(struct UscConfig **config);

// Loads a JSON config; absent fields take their defaults.
//
// # Safety
// `path` must be a nul-terminated string and `config` writable.
enum UscStatus usc_config_load(const char *path, struct UscConfig **config);

// Loss settings held by a config handle.
//
// # Safety
// `config` must be a live handle and `result` writable.
enum UscStatus usc_config_loss(const struct UscConfig *config, struct UscLossConfig *result);

// # Safety
// `config` must be NULL or a handle not yet freed.
void usc_config_free(struct UscConfig *config);

// Evaluates `dataset`. A NULL `config` selects the defaults.
//
// # Safety
// `dataset` must be a live handle, `config` NULL or live, `report` writable.
enum UscStatus usc_evaluate(const struct UscDataset *dataset,
                            const struct UscConfig *config,
                            struct UscReport **report);

// # Safety
// `report` must be a live handle and `count` writable.
enum UscStatus usc_report_bucket_count(const struct UscReport *report, size_t *count);

// Summary of bucket `index`, in config order.
//
// # Safety
// `report` must be a live handle and `summary` writable.
enum UscStatus usc_report_bucket_summary(const struct UscReport *report,
                                         size_t index,
                                         struct UscSummary *summary);

// Mean of the bucket summaries.
//
// # Safety
// `report` must be a live handle and `summary` writable.
enum UscStatus usc_report_overall(const struct UscReport *report, struct UscSummary *summary);

// Full report as JSON; free the string with [`usc_string_free`].
//
// # Safety
// `report` must be a live handle and `json` writable.
enum UscStatus usc_report_to_json(const struct UscReport *report, char **json);

// # Safety
// `report` must be NULL or a handle not yet freed.
void usc_report_free(struct UscReport *report);

// # Safety
// `s` must be NULL or a string returned by this library and not yet freed.
void usc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* USC_H */
