#ifndef ADAGRAPH_H
#define ADAGRAPH_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AgStatus {
  AG_STATUS_OK = 0,
  AG_STATUS_NULL_POINTER = 1,
  AG_STATUS_INVALID_ARGUMENT = 2,
  AG_STATUS_IO = 3,
  AG_STATUS_PARSE = 4,
  AG_STATUS_OUT_OF_RANGE = 5,
  AG_STATUS_MISSING_PROFILE = 6,
  AG_STATUS_PRECONDITION = 7,
  AG_STATUS_BUFFER_TOO_SMALL = 8,
  AG_STATUS_PANIC = 9,
} AgStatus;

typedef enum AgMode {
  AG_MODE_SEQUENTIAL = 0,
  /**
   * Fixed degree of parallelism for every iteration.
   */
  AG_MODE_SIMPLE = 1,
  /**
   * Cost-model driven; needs a machine profile.
   */
  AG_MODE_SCHEDULER = 2,
} AgMode;

typedef enum AgPageRankVariant {
  AG_PAGE_RANK_VARIANT_PUSH = 0,
  AG_PAGE_RANK_VARIANT_PULL = 1,
} AgPageRankVariant;

/**
 * A loaded graph.
 */
typedef struct AgGraph AgGraph;

/**
 * A calibrated machine profile.
 */
typedef struct AgMachine AgMachine;

typedef struct AgGraphStats {
  uint64_t vertex_count;
  uint64_t edge_count;
  uint64_t reachable_count;
  uint64_t max_out_degree;
  double mean_out_degree;
} AgGraphStats;

/**
 * Execution settings shared by the algorithm entry points.
 */
typedef struct AgExecOptions {
  enum AgMode mode;
  /**
   * Hardware threads for the query; 0 means all.
   */
  uint32_t threads;
  /**
   * Required for `AG_MODE_SCHEDULER`, ignored otherwise.
   */
  const struct AgMachine *machine;
} AgExecOptions;

typedef struct AgPageRankParams {
  double damping;
  double epsilon;
  uint32_t max_iterations;
} AgPageRankParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next call into the library from the same thread.
 */
const char *ag_last_error(void);

/**
 * Loads a whitespace-separated edge list (`#` starts a comment).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AgStatus ag_graph_load(const char *path, struct AgGraph **out);

/**
 * Generates an RMAT graph with `2^scale` vertices.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum AgStatus ag_graph_rmat(uint32_t scale,
                            double edge_factor,
                            uint64_t seed,
                            struct AgGraph **out);

/**
 * # Safety
 * `graph` must come from this library and not be used afterwards. NULL is
 * ignored.
 */
void ag_graph_free(struct AgGraph *graph);

/**
 * # Safety
 * `graph` must be a live handle and `out` a valid pointer.
 */
enum AgStatus ag_graph_stats(const struct AgGraph *graph, struct AgGraphStats *out);

/**
 * Loads a machine profile written by `adagraph calibrate`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AgStatus ag_machine_load(const char *path, struct AgMachine **out);

/**
 * # Safety
 * `machine` must come from this library and not be used afterwards. NULL is
 * ignored.
 */
void ag_machine_free(struct AgMachine *machine);

/**
 * Predicted atomic update latency in nanoseconds for `bytes` of touched
 * memory shared by `threads` threads.
 *
 * # Safety
 * `machine` must be a live handle and `out_ns` a valid pointer.
 */
enum AgStatus ag_machine_predict_latency(const struct AgMachine *machine,
                                         uint64_t bytes,
                                         uint32_t threads,
                                         double *out_ns);

/**
 * Breadth-first search from `source`. Writes one level per vertex into
 * `levels` (`UINT32_MAX` for unreached vertices); `capacity` must be at
 * least the vertex count.
 *
 * # Safety
 * `graph` must be a live handle, `options` valid, and `levels` must point to
 * `capacity` writable values.
 */
enum AgStatus ag_bfs(const struct AgGraph *graph,
                     uint32_t source,
                     const struct AgExecOptions *options,
                     uint32_t *levels,
                     uintptr_t capacity);

/**
 * Default PageRank parameters.
 */
struct AgPageRankParams ag_pagerank_default_params(void);

/**
 * PageRank. Writes one rank per vertex into `ranks`; `iterations` may be
 * NULL.
 *
 * # Safety
 * `graph` must be a live handle, `params` and `options` valid, and `ranks`
 * must point to `capacity` writable values.
 */
enum AgStatus ag_pagerank(const struct AgGraph *graph,
                          enum AgPageRankVariant variant,
                          const struct AgPageRankParams *params,
                          const struct AgExecOptions *options,
                          double *ranks,
                          uintptr_t capacity,
                          uint32_t *iterations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADAGRAPH_H */
