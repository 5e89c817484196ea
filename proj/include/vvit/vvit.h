// Copyright 2026 The vvit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/* C interface to the vvit library.
 *
 * Every function returns a vvit_status. On failure the message for the
 * calling thread is available from vvit_last_error() until the next call
 * on that thread. Objects are opaque handles released with the matching
 * *_free function; strings returned through char** are released with
 * vvit_string_free. */
#ifndef VVIT_VVIT_H
#define VVIT_VVIT_H

#include <stddef.h>
#include <stdint.h>

#if defined(VVIT_BUILDING_LIBRARY)
#define VVIT_API __attribute__((visibility("default")))
#else
#define VVIT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vvit_status {
  VVIT_OK = 0,
  VVIT_ERR_CONFIG = 1,           /* invalid configuration value or file */
  VVIT_ERR_SHAPE = 2,            /* tensor/image shape mismatch */
  VVIT_ERR_INPUT = 3,            /* bad argument or incompatible input */
  VVIT_ERR_LABEL = 4,            /* label outside its domain */
  VVIT_ERR_PARSE = 5,            /* malformed file contents */
  VVIT_ERR_IO = 6,               /* file could not be read or written */
  VVIT_ERR_INDEX = 7,            /* unknown sample id, block out of range */
  VVIT_ERR_UNDEFINED_METRIC = 8, /* e.g. AUROC on single-class data */
  VVIT_ERR_NUMERIC = 9,          /* NaN/Inf during computation */
  VVIT_ERR_INTERNAL = 10
} vvit_status;

typedef enum vvit_eye { VVIT_EYE_TARGET = 0, VVIT_EYE_FELLOW = 1 } vvit_eye;

/* Passing this as a block index averages the maps of all cross-attention blocks. */
#define VVIT_ALL_BLOCKS ((size_t)-1)

typedef struct vvit_dataset vvit_dataset;
typedef struct vvit_model vvit_model;

/* Receives one progress line (no trailing newline). */
typedef void (*vvit_log_fn)(const char* line, void* user);

typedef struct vvit_metrics {
  size_t count;
  double recall;
  double f1;
  double brier;
  double auroc;
  double ece;
  double accuracy;
  int classification_warning; /* nonzero if a zero denominator was hit */
} vvit_metrics;

VVIT_API const char* vvit_version(void);
VVIT_API const char* vvit_last_error(void);
VVIT_API const char* vvit_status_name(vvit_status status);
VVIT_API void vvit_string_free(char* text);

/* ---- datasets ---------------------------------------------------------- */

/* config_path may be NULL for the default generator settings. A non-NULL
 * seed overrides the configured seed. */
VVIT_API vvit_status vvit_dataset_generate(const char* config_path, const uint64_t* seed, vvit_dataset** out);
VVIT_API vvit_status vvit_dataset_read(const char* path, vvit_dataset** out);
VVIT_API vvit_status vvit_dataset_write(const vvit_dataset* dataset, const char* path);
VVIT_API vvit_status vvit_dataset_size(const vvit_dataset* dataset, size_t* out);
/* Counts, positive rate and rater histogram as text. */
VVIT_API vvit_status vvit_dataset_summary(const vvit_dataset* dataset, char** text);
VVIT_API void vvit_dataset_free(vvit_dataset* dataset);

/* ---- training ---------------------------------------------------------- */

/* Config paths may be NULL for defaults. Writes <out_dir>/model.ckpt (or the
 * train config's checkpoint_path when set), <out_dir>/loss.csv and
 * <out_dir>/splits.json. model may be NULL. */
VVIT_API vvit_status vvit_train(const vvit_dataset* dataset, const char* model_config_path,
                                const char* train_config_path, const char* out_dir, vvit_log_fn log, void* user,
                                vvit_model** model);

VVIT_API vvit_status vvit_model_load(const char* path, vvit_model** out);
VVIT_API vvit_status vvit_model_save(const vvit_model* model, const char* path);
VVIT_API void vvit_model_free(vvit_model* model);

/* ---- evaluation -------------------------------------------------------- */

/* Scores the whole dataset, or one split ("train", "val", "test") of a split
 * manifest written by vvit_train. When out_dir is non-NULL, writes
 * metrics.json, reliability.csv and roc.csv there. metrics may be NULL. */
VVIT_API vvit_status vvit_evaluate(const vvit_model* model, const vvit_dataset* dataset, const char* manifest_path,
                                   const char* split_name, size_t bins, double threshold, uint64_t seed,
                                   const char* out_dir, vvit_metrics* metrics);

/* Trains every (B, V, M) triple once per seed and writes <out_dir>/ablation.csv
 * (means and standard deviations) and <out_dir>/ablation_runs.csv (one row
 * per run). triples is a "B,V,M;B,V,M" list or NULL for the four standard
 * rows. */
VVIT_API vvit_status vvit_ablate(const vvit_dataset* dataset, const char* model_config_path,
                                 const char* train_config_path, const uint64_t* seeds, size_t seed_count,
                                 const char* triples, size_t jobs, size_t bins, double threshold,
                                 const char* out_dir, vvit_log_fn log, void* user);

/* ---- attention --------------------------------------------------------- */

/* Copies the head-averaged [CLS] attention over the eye's patch grid into
 * grid (row-major). Pass grid = NULL to query rows/cols only. */
VVIT_API vvit_status vvit_attention_map(const vvit_model* model, const vvit_dataset* dataset, const char* sample_id,
                                        size_t block, vvit_eye eye, double* grid, size_t capacity, size_t* rows,
                                        size_t* cols);
/* Writes the grid as CSV to csv_path and the planted disc geometry, argmax
 * cell and block/eye metadata to the same path with a .json extension. */
VVIT_API vvit_status vvit_attention_write(const vvit_model* model, const vvit_dataset* dataset, const char* sample_id,
                                          size_t block, vvit_eye eye, const char* csv_path);

/* ---- reports ----------------------------------------------------------- */

/* Renders metrics.json, an ablation CSV or a loss CSV as a text table. */
VVIT_API vvit_status vvit_report_render(const char* path, char** text);

#ifdef __cplusplus
}
#endif

#endif /* VVIT_VVIT_H */
