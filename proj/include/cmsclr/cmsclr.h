/* Copyright 2026 The cmsclr Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the cmsclr library. Every fallible call returns a status;
 * on failure cmsclr_last_error() describes the problem (per thread). Handles
 * are opaque and owned by the caller, who releases them with the matching
 * _free function. Passing NULL to a _free function is a no-op. */

#ifndef CMSCLR_CMSCLR_H_
#define CMSCLR_CMSCLR_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(CMSCLR_BUILDING_LIBRARY)
#define CMSCLR_API __attribute__((visibility("default")))
#else
#define CMSCLR_API
#endif

typedef enum cmsclr_status {
  CMSCLR_OK = 0,
  CMSCLR_ERR_INVALID_ARGUMENT = 1,
  CMSCLR_ERR_CONFIG = 2,
  CMSCLR_ERR_DATA = 3,
  CMSCLR_ERR_PARSE = 4,
  CMSCLR_ERR_IO = 5,
  CMSCLR_ERR_SHAPE = 6,
  CMSCLR_ERR_DOMAIN = 7,
  CMSCLR_ERR_DEGENERATE = 8,
  CMSCLR_ERR_USAGE = 9,
  CMSCLR_ERR_NUMERICAL = 10,
  CMSCLR_ERR_INTERNAL = 11
} cmsclr_status;

typedef struct cmsclr_config cmsclr_config;
typedef struct cmsclr_dataset cmsclr_dataset;
typedef struct cmsclr_model cmsclr_model;

typedef struct cmsclr_metrics {
  double mae;
  double pearson;
  double acc2_nonneg;
  double acc2_posneg;
  double f1_weighted_nonneg;
  double f1_weighted_posneg;
  size_t n_eval;
  size_t n_posneg;
} cmsclr_metrics;

typedef struct cmsclr_epoch_log {
  size_t epoch;
  double lr;
  double train_mse;
  double train_con;
  double nu;
  double val_mse;
  double val_con;
  double val_mae;
  double val_pearson;
} cmsclr_epoch_log;

typedef void (*cmsclr_epoch_callback)(const cmsclr_epoch_log* log,
                                      void* user_data);

CMSCLR_API const char* cmsclr_last_error(void);
CMSCLR_API const char* cmsclr_status_name(cmsclr_status status);

/* Configuration. preset may be NULL for the desk defaults. */
CMSCLR_API cmsclr_status cmsclr_config_create(const char* preset,
                                              cmsclr_config** out);
/* Values in the file override the preset. */
CMSCLR_API cmsclr_status cmsclr_config_load(const char* path,
                                            const char* preset,
                                            cmsclr_config** out);
/* Applies the keys of a JSON object on top of the current values. */
CMSCLR_API cmsclr_status cmsclr_config_merge_json(cmsclr_config* config,
                                                  const char* json);
CMSCLR_API cmsclr_status cmsclr_config_set_seed(cmsclr_config* config,
                                                uint64_t seed);
CMSCLR_API cmsclr_status cmsclr_config_validate(const cmsclr_config* config);
/* Writes a NUL-terminated JSON document; *needed receives the full size
 * including the terminator even when capacity is too small. */
CMSCLR_API cmsclr_status cmsclr_config_to_json(const cmsclr_config* config,
                                               char* buffer, size_t capacity,
                                               size_t* needed);
CMSCLR_API void cmsclr_config_free(cmsclr_config* config);

/* Writes prefix.{train,val,test}.jsonl and .oracle.jsonl sidecars. */
CMSCLR_API cmsclr_status cmsclr_generate_synthetic(const cmsclr_config* config,
                                                   uint64_t seed,
                                                   const char* prefix);

/* Feature widths are checked against the configuration. */
CMSCLR_API cmsclr_status cmsclr_dataset_load(const char* path,
                                             const cmsclr_config* config,
                                             cmsclr_dataset** out);
CMSCLR_API size_t cmsclr_dataset_size(const cmsclr_dataset* dataset);
CMSCLR_API void cmsclr_dataset_free(cmsclr_dataset* dataset);

/* Fresh parameters drawn from the configuration's seed. */
CMSCLR_API cmsclr_status cmsclr_model_create(const cmsclr_config* config,
                                             cmsclr_model** out);
/* Trains and returns the best-by-validation-MAE model. log_path and
 * callback may be NULL. */
CMSCLR_API cmsclr_status cmsclr_train(const cmsclr_config* config,
                                      const cmsclr_dataset* train,
                                      const cmsclr_dataset* val,
                                      const char* log_path,
                                      cmsclr_epoch_callback callback,
                                      void* user_data, cmsclr_model** out);
CMSCLR_API cmsclr_status cmsclr_model_save(const cmsclr_model* model,
                                           const char* path);
CMSCLR_API cmsclr_status cmsclr_model_load(const char* path,
                                           cmsclr_model** out);
/* Copy of the configuration stored with the model. */
CMSCLR_API cmsclr_status cmsclr_model_config(const cmsclr_model* model,
                                             cmsclr_config** out);
CMSCLR_API size_t cmsclr_model_parameter_count(const cmsclr_model* model);
CMSCLR_API void cmsclr_model_free(cmsclr_model* model);

CMSCLR_API cmsclr_status cmsclr_evaluate(const cmsclr_model* model,
                                         const cmsclr_dataset* dataset,
                                         cmsclr_metrics* out);
/* Fills out[0..n) with predictions, n = dataset size <= capacity. */
CMSCLR_API cmsclr_status cmsclr_predict(const cmsclr_model* model,
                                        const cmsclr_dataset* dataset,
                                        double* out, size_t capacity);

/* Finite-difference check of the full loss on fresh parameters. */
CMSCLR_API cmsclr_status cmsclr_gradcheck(const cmsclr_config* config,
                                          double step, double* max_rel_error,
                                          size_t* coordinates);
CMSCLR_API cmsclr_status cmsclr_mag_check(uint64_t seed, double* deviation);

CMSCLR_API cmsclr_status cmsclr_export_embeddings(const cmsclr_model* model,
                                                  const cmsclr_dataset* dataset,
                                                  const char* path);
CMSCLR_API cmsclr_status cmsclr_dump_cms_maps(const cmsclr_model* model,
                                              const cmsclr_dataset* dataset,
                                              size_t layer,
                                              const char* out_dir,
                                              size_t* files_written);

#ifdef __cplusplus
}
#endif

#endif /* CMSCLR_CMSCLR_H_ */
