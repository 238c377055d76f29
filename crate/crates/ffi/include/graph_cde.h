#ifndef GRAPH_CDE_H
#define GRAPH_CDE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GcdeStatus {
  GCDE_STATUS_OK = 0,
  GCDE_STATUS_GRAPH = 1,
  GCDE_STATUS_METRIC = 2,
  GCDE_STATUS_DIMENSION = 3,
  GCDE_STATUS_CONTRACT = 4,
  GCDE_STATUS_NUMERIC = 5,
  GCDE_STATUS_DIVERGED = 6,
  GCDE_STATUS_CONFIG = 7,
  GCDE_STATUS_INFEASIBLE = 8,
  GCDE_STATUS_PARSE = 9,
  GCDE_STATUS_IO = 10,
  GCDE_STATUS_NULL_POINTER = 11,
  GCDE_STATUS_INVALID_UTF8 = 12,
  GCDE_STATUS_PANIC = 13,
} GcdeStatus;

typedef enum GcdeDiffusion {
  GCDE_DIFFUSION_LAP = 0,
  GCDE_DIFFUSION_GAT = 1,
  GCDE_DIFFUSION_TRANS = 2,
  GCDE_DIFFUSION_GRAPH_BEL = 3,
} GcdeDiffusion;

typedef enum GcdeConvTarget {
  GCDE_CONV_TARGET_XJ = 0,
  GCDE_CONV_TARGET_XI = 1,
} GcdeConvTarget;

typedef enum GcdeActivation {
  GCDE_ACTIVATION_TANH = 0,
  GCDE_ACTIVATION_SIGMOID = 1,
  GCDE_ACTIVATION_IDENTITY = 2,
} GcdeActivation;

typedef enum GcdeSolver {
  GCDE_SOLVER_EULER = 0,
  GCDE_SOLVER_RK4 = 1,
} GcdeSolver;

/**
 * Opaque dataset: graph, features, labels and an optional split.
 */
typedef struct GcdeDataset GcdeDataset;

/**
 * Opaque CSR graph.
 */
typedef struct GcdeGraph GcdeGraph;

/**
 * Synthetic graph with Gaussian class features and a 60/20/20 random split.
 */
typedef struct GcdeSynthConfig {
  double h_target;
  size_t num_classes;
  size_t nodes_per_class;
  size_t intra_edges_per_node;
  size_t feature_dim;
  double class_mean_scale;
  double noise_sigma;
  uint64_t seed;
} GcdeSynthConfig;

/**
 * Model and optimizer settings. Start from `gcde_train_config_default`.
 */
typedef struct GcdeTrainConfig {
  size_t hidden_dim;
  enum GcdeDiffusion diffusion;
  bool convection;
  enum GcdeConvTarget conv_target;
  enum GcdeActivation activation;
  enum GcdeSolver solver;
  double time;
  double step_size;
  double dropout;
  double learning_rate;
  double weight_decay;
  size_t max_epochs;
  size_t patience;
  uint64_t seed;
} GcdeTrainConfig;

typedef struct GcdeTrainResult {
  double train_accuracy;
  double val_accuracy;
  double test_accuracy;
  size_t best_epoch;
  size_t epochs_run;
} GcdeTrainResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *gcde_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gcde_version(void);

/**
 * Builds a deduplicated graph from `num_edges` pairs `(src[k], dst[k])`.
 *
 * # Safety
 * `src` and `dst` must point to `num_edges` readable values; `out` must be writable.
 */
enum GcdeStatus gcde_graph_new(const size_t *src,
                               const size_t *dst,
                               size_t num_edges,
                               size_t num_nodes,
                               bool undirected,
                               struct GcdeGraph **out);

/**
 * # Safety
 * `graph` must come from `gcde_graph_new` and not be freed twice. NULL is ignored.
 */
void gcde_graph_free(struct GcdeGraph *graph);

/**
 * # Safety
 * `graph` must be a live handle.
 */
size_t gcde_graph_num_nodes(const struct GcdeGraph *graph);

/**
 * Number of distinct edges, counting each undirected edge once.
 *
 * # Safety
 * `graph` must be a live handle.
 */
size_t gcde_graph_num_edges(const struct GcdeGraph *graph);

/**
 * Edge homophily and adjusted homophily for `labels` (one per node).
 * `*h_adj_defined` is false, and `*h_adj` NaN, when the adjusted value is undefined.
 *
 * # Safety
 * `labels` must hold `gcde_graph_num_nodes(graph)` values; outputs must be writable.
 */
enum GcdeStatus gcde_homophily(const struct GcdeGraph *graph,
                               const size_t *labels,
                               size_t num_classes,
                               double *h_edge,
                               double *h_adj,
                               bool *h_adj_defined);

/**
 * Loads a dataset directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GcdeStatus gcde_dataset_load(const char *path, struct GcdeDataset **out);

/**
 * Fills `cfg` with the library defaults.
 *
 * # Safety
 * `cfg` must be writable.
 */
enum GcdeStatus gcde_synth_config_default(struct GcdeSynthConfig *cfg);

/**
 * # Safety
 * `cfg` must be readable; `out` must be writable.
 */
enum GcdeStatus gcde_dataset_generate(const struct GcdeSynthConfig *cfg, struct GcdeDataset **out);

/**
 * Writes the dataset directory format to `path`.
 *
 * # Safety
 * `ds` must be a live handle; `path` a NUL-terminated string.
 */
enum GcdeStatus gcde_dataset_save(const struct GcdeDataset *ds, const char *path);

/**
 * # Safety
 * `ds` must come from a `gcde_dataset_*` constructor and not be freed twice. NULL is ignored.
 */
void gcde_dataset_free(struct GcdeDataset *ds);

/**
 * # Safety
 * `ds` must be a live handle.
 */
size_t gcde_dataset_num_nodes(const struct GcdeDataset *ds);

/**
 * # Safety
 * `ds` must be a live handle.
 */
size_t gcde_dataset_num_classes(const struct GcdeDataset *ds);

/**
 * Edge homophily of the dataset graph.
 *
 * # Safety
 * `ds` must be a live handle; `out` writable.
 */
enum GcdeStatus gcde_dataset_h_edge(const struct GcdeDataset *ds, double *out);

/**
 * # Safety
 * `cfg` must be writable.
 */
enum GcdeStatus gcde_train_config_default(struct GcdeTrainConfig *cfg);

/**
 * Trains on the dataset's stored split, or a seeded 60/20/20 random split
 * when it has none, and reports accuracies of the best-validation model.
 *
 * # Safety
 * `ds` must be a live handle, `cfg` readable and `out` writable.
 */
enum GcdeStatus gcde_train(const struct GcdeDataset *ds,
                           const struct GcdeTrainConfig *cfg,
                           struct GcdeTrainResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRAPH_CDE_H */
