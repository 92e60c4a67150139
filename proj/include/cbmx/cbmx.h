/*
 * Copyright 2026 The cbmx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CBMX_CBMX_H_
#define CBMX_CBMX_H_

/*
 * C interface to libcbmx: synthetic concept datasets, concept bottleneck
 * models, saliency attribution and the evaluation kit.
 *
 * Every function returns a cbmx_status. On failure a message describing the
 * last error of the calling thread is available from cbmx_last_error().
 * Handles are opaque; release them with the matching *_free function.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CBMX_API __declspec(dllexport)
#else
#define CBMX_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cbmx_status {
  CBMX_OK = 0,
  CBMX_INVALID_ARGUMENT = 1,
  CBMX_SHAPE_MISMATCH = 2,
  CBMX_NON_FINITE = 3,
  CBMX_CANNOT_FOLD = 4,
  CBMX_NOT_CANONIZED = 5,
  CBMX_INDEX_OUT_OF_RANGE = 6,
  CBMX_LENGTH_MISMATCH = 7,
  CBMX_EMPTY = 8,
  CBMX_CONFIG_INVALID = 9,
  CBMX_NOT_VISIBLE = 10,
  CBMX_OUT_OF_BOUNDS = 11,
  CBMX_BAD_MAGIC = 12,
  CBMX_CORRUPT_OFFSETS = 13,
  CBMX_IO_ERROR = 14,
  CBMX_INTERNAL_ERROR = 15,
} cbmx_status;

CBMX_API const char* cbmx_status_name(cbmx_status status);
CBMX_API const char* cbmx_last_error(void);

typedef struct cbmx_dataset cbmx_dataset;
typedef struct cbmx_model cbmx_model;
typedef struct cbmx_map cbmx_map;

typedef enum cbmx_split { CBMX_SPLIT_TRAIN = 0, CBMX_SPLIT_TEST = 1 } cbmx_split;

/* Datasets */

typedef struct cbmx_gen_config {
  size_t height;
  size_t width;
  size_t parts;
  size_t colors;
  size_t classes;
  size_t samples; /* train + test; 80% go to train */
  uint64_t seed;
  double noise;
} cbmx_gen_config;

CBMX_API void cbmx_gen_config_default(cbmx_gen_config* config);
CBMX_API cbmx_status cbmx_dataset_generate(const cbmx_gen_config* config, cbmx_dataset** out);
/* Writes <dir>/dataset.cbx, creating dir if needed. */
CBMX_API cbmx_status cbmx_dataset_save(const cbmx_dataset* dataset, const char* dir);
CBMX_API cbmx_status cbmx_dataset_load(const char* dir, cbmx_dataset** out);
CBMX_API void cbmx_dataset_free(cbmx_dataset* dataset);
CBMX_API cbmx_status cbmx_dataset_size(const cbmx_dataset* dataset, cbmx_split split, size_t* out);
CBMX_API cbmx_status cbmx_dataset_num_concepts(const cbmx_dataset* dataset, size_t* out);
CBMX_API cbmx_status cbmx_dataset_num_parts(const cbmx_dataset* dataset, size_t* out);
/* Part described by a concept. */
CBMX_API cbmx_status cbmx_dataset_concept_part(const cbmx_dataset* dataset, size_t concept_index,
                                               size_t* part);

/* Models */

typedef enum cbmx_regime {
  CBMX_REGIME_INDEPENDENT = 0,
  CBMX_REGIME_SEQUENTIAL = 1,
  CBMX_REGIME_JOINT = 2,
} cbmx_regime;

typedef struct cbmx_train_config {
  cbmx_regime regime;
  int sigmoid_between; /* nonzero: f consumes sigmoid(concept logits) */
  double lambda;       /* concept loss weight, joint regime */
  size_t epochs;
  size_t batch_size;
  double learning_rate;
  double momentum;
  uint64_t seed;
} cbmx_train_config;

typedef struct cbmx_metrics {
  double concept_accuracy;
  double class_accuracy;
} cbmx_metrics;

CBMX_API void cbmx_train_config_default(cbmx_train_config* config);
/* Trains on the train split. */
CBMX_API cbmx_status cbmx_model_train(const cbmx_dataset* dataset, const cbmx_train_config* config,
                                      cbmx_model** out);
CBMX_API cbmx_status cbmx_model_save(const cbmx_model* model, const char* path);
CBMX_API cbmx_status cbmx_model_load(const char* path, cbmx_model** out);
CBMX_API void cbmx_model_free(cbmx_model* model);
CBMX_API cbmx_status cbmx_model_evaluate(const cbmx_model* model, const cbmx_dataset* dataset,
                                         cbmx_split split, cbmx_metrics* out);
/* Per-epoch training history; CBMX_EMPTY for loaded models. */
CBMX_API cbmx_status cbmx_model_write_history_csv(const cbmx_model* model, const char* path);

/* Attribution */

typedef enum cbmx_method {
  CBMX_METHOD_LRP = 0,
  CBMX_METHOD_GRAD = 1,
  CBMX_METHOD_IG = 2,
} cbmx_method;

typedef enum cbmx_target_kind {
  CBMX_TARGET_CONCEPT = 0, /* image-shaped map of a concept logit */
  CBMX_TARGET_CLASS = 1,   /* concept-length relevance of a class logit */
} cbmx_target_kind;

typedef struct cbmx_attr_config {
  cbmx_method method;
  size_t ig_steps;
  size_t smoothgrad_samples; /* 0 disables SmoothGrad */
  double smoothgrad_sigma;
  uint64_t seed;
} cbmx_attr_config;

typedef struct cbmx_sign_pattern {
  size_t present_pos;
  size_t present_neg;
  size_t absent_pos;
  size_t absent_neg;
  size_t zero;
} cbmx_sign_pattern;

CBMX_API void cbmx_attr_config_default(cbmx_attr_config* config);
CBMX_API cbmx_status cbmx_attribute(const cbmx_model* model, const cbmx_dataset* dataset,
                                    cbmx_split split, size_t sample, cbmx_target_kind kind,
                                    size_t index, const cbmx_attr_config* config, cbmx_map** out);
CBMX_API void cbmx_map_free(cbmx_map* map);
/* dims receives up to 3 extents. */
CBMX_API cbmx_status cbmx_map_shape(const cbmx_map* map, size_t dims[3], size_t* rank);
CBMX_API cbmx_status cbmx_map_data(const cbmx_map* map, const double** data, size_t* size);
/* Most salient point of the channel-reduced map. */
CBMX_API cbmx_status cbmx_map_peak(const cbmx_map* map, size_t* row, size_t* col);
/* Present/absent x positive/negative counts; class targets only, presence
   taken from the model's concept prediction. */
CBMX_API cbmx_status cbmx_map_sign_pattern(const cbmx_map* map, cbmx_sign_pattern* out);
/* Red/blue signed rendering as binary PPM. */
CBMX_API cbmx_status cbmx_map_write_ppm(const cbmx_map* map, const char* path);
/* Concept maps: row,col,saliency over the reduced grid. Class maps:
   concept_id,concept_name,relevance. */
CBMX_API cbmx_status cbmx_map_write_csv(const cbmx_map* map, const char* path);

/* Evaluation */

/* Distance pointing game over the first max_samples samples of the split
   (0 = all). concepts[i] is scored against the keypoint of parts[i]. */
CBMX_API cbmx_status cbmx_pointing_csv(const cbmx_model* model, const cbmx_dataset* dataset,
                                       cbmx_split split, const cbmx_method* methods,
                                       size_t n_methods, const size_t* concepts,
                                       const size_t* parts, size_t n_pairs, size_t max_samples,
                                       size_t ig_steps, const char* path);
/* Target defaults to the predicted class when has_target is 0. */
CBMX_API cbmx_status cbmx_contributions_csv(const cbmx_model* model, const cbmx_dataset* dataset,
                                            cbmx_split split, size_t sample, int has_target,
                                            size_t target, const char* path);
CBMX_API cbmx_status cbmx_intervene_csv(const cbmx_model* model, const cbmx_dataset* dataset,
                                        cbmx_split split, size_t sample, const size_t* indices,
                                        const double* values, size_t n_overrides,
                                        const char* path);

/* Blocks serving the HTTP API on host:port. */
CBMX_API cbmx_status cbmx_serve(const cbmx_model* model, const cbmx_dataset* dataset,
                                cbmx_split split, const char* host, int port);

#ifdef __cplusplus
}
#endif

#endif /* CBMX_CBMX_H_ */
