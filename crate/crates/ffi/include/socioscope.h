#ifndef SOCIOSCOPE_H
#define SOCIOSCOPE_H

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_NULL_POINTER = 1,
  SS_STATUS_INVALID_ARGUMENT = 2,
  SS_STATUS_INSUFFICIENT_DATA = 3,
  SS_STATUS_IO = 4,
  SS_STATUS_PARSE = 5,
  SS_STATUS_INFEASIBLE = 6,
  SS_STATUS_INTERNAL = 7,
  SS_STATUS_PANIC = 8,
} SsStatus;

// Undirected simple graph on nodes `0..node_count`.
typedef struct SsGraph SsGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
// The pointer stays valid until the next call into this library on the same thread.
const char *ss_last_error(void);

// Library version as a static NUL-terminated string.
const char *ss_version(void);

// Builds a graph on `node_count` nodes from `edge_count` pairs `(src[i], dst[i])`.
// Self-loops and repeated pairs are dropped. The handle in `out` must be
// released with `ss_graph_free`.
//
// # Safety
// `src` and `dst` must point to `edge_count` readable elements and `out` to a writable handle slot.
enum SsStatus ss_graph_new(size_t node_count,
                           const uint32_t *src,
                           const uint32_t *dst,
                           size_t edge_count,
                           struct SsGraph **out);

// Releases a graph handle; null is ignored.
//
// # Safety
// `graph` must come from this library and not be used afterwards.
void ss_graph_free(struct SsGraph *graph);

// Node count, or 0 for a null handle.
//
// # Safety
// `graph` must be null or a live handle.
size_t ss_graph_node_count(const struct SsGraph *graph);

// Edge count, or 0 for a null handle.
//
// # Safety
// `graph` must be null or a live handle.
size_t ss_graph_edge_count(const struct SsGraph *graph);

// Writes the degree of each node into `degrees`, which holds `len` slots;
// `len` must equal the node count.
//
// # Safety
// `graph` must be a live handle and `degrees` must point to `len` writable elements.
enum SsStatus ss_graph_degrees(const struct SsGraph *graph, size_t *degrees, size_t len);

// Copies the edges as `(src[i], dst[i])` with `src[i] < dst[i]`, sorted;
// both buffers hold `len` slots and `len` must equal the edge count.
//
// # Safety
// `graph` must be a live handle and `src`, `dst` must point to `len` writable elements.
enum SsStatus ss_graph_edges(const struct SsGraph *graph, uint32_t *src, uint32_t *dst, size_t len);

// Degree-preserving randomization with `swaps_factor × edges` swap attempts.
// The result is a new handle in `out`.
//
// # Safety
// `graph` must be a live handle and `out` a writable handle slot.
enum SsStatus ss_graph_rewire(const struct SsGraph *graph,
                              double swaps_factor,
                              uint64_t seed,
                              struct SsGraph **out);

// Gini coefficient of `n` non-negative values from the trapezoidal Lorenz area.
//
// # Safety
// `values` must point to `n` readable elements and `out` to a writable double.
enum SsStatus ss_gini(const double *values, size_t n, double *out);

// Hill estimate of the Pareto exponent over the largest `tail_fraction` of the values.
//
// # Safety
// `values` must point to `n` readable elements and `out` to a writable double.
enum SsStatus ss_pareto_alpha(const double *values, size_t n, double tail_fraction, double *out);

// Splits the values into `n_classes` AMP-ranked classes of equal cumulative
// value and writes the 1-based class of each input position to `classes`.
//
// # Safety
// `values` must point to `n` readable elements and `classes` to `n` writable elements.
enum SsStatus ss_partition_classes(const double *values,
                                   size_t n,
                                   size_t n_classes,
                                   uint32_t *classes);

// Louvain communities of a weighted undirected graph on `node_count` nodes.
// Writes a community index per node to `labels` and the modularity to
// `modularity`; returns the number of communities through `count`.
//
// # Safety
// `src`, `dst` and `weight` must point to `edge_count` readable elements,
// `labels` to `node_count` writable elements, and `count`, `modularity` to writable slots.
enum SsStatus ss_louvain(size_t node_count,
                         const uint32_t *src,
                         const uint32_t *dst,
                         const double *weight,
                         size_t edge_count,
                         uint64_t seed,
                         uint32_t *labels,
                         size_t *count,
                         double *modularity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOCIOSCOPE_H */
