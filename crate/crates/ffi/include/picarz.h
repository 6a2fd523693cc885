#ifndef PICARZ_H
#define PICARZ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum PicarzStatus {
  PICARZ_STATUS_OK = 0,
  PICARZ_STATUS_NULL_POINTER = 1,
  PICARZ_STATUS_INVALID_ARGUMENT = 2,
  PICARZ_STATUS_NUMERICAL = 3,
  PICARZ_STATUS_IO = 4,
  PICARZ_STATUS_CONFIG = 5,
  PICARZ_STATUS_BUFFER_TOO_SMALL = 6,
  PICARZ_STATUS_PANIC = 7,
} PicarzStatus;

// Mesh construction mode.
typedef enum PicarzMeshMode {
  PICARZ_MESH_MODE_REGULAR_LATTICE = 0,
  PICARZ_MESH_MODE_DELAUNAY = 1,
} PicarzMeshMode;

// Opaque Moran basis handle.
typedef struct PicarzBasis PicarzBasis;

// Opaque posterior chain handle.
typedef struct PicarzChain PicarzChain;

// Opaque dataset handle.
typedef struct PicarzDataset PicarzDataset;

// Opaque triangular mesh handle.
typedef struct PicarzMesh PicarzMesh;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next `picarz_*` call on the same thread.
const char *picarz_last_error_message(void);

// Library version as a static nul-terminated string.
const char *picarz_version(void);

// Simulate one replicate with the reference design, changing only the
// sizes. `family` is e.g. `"mixture-poisson"` or `"hurdle-count"`.
//
// # Safety
// `family` must be a nul-terminated string and `out` writable.
enum PicarzStatus picarz_dataset_simulate(const char *family,
                                          size_t n,
                                          size_t n_cv,
                                          uint64_t seed,
                                          struct PicarzDataset **out);

// # Safety
// `path` must be a nul-terminated string and `out` writable.
enum PicarzStatus picarz_dataset_read_csv(const char *path, struct PicarzDataset **out);

// # Safety
// `ds` must be a live dataset handle and `path` a nul-terminated string.
enum PicarzStatus picarz_dataset_write_csv(const struct PicarzDataset *ds, const char *path);

// Number of rows, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live dataset handle.
size_t picarz_dataset_len(const struct PicarzDataset *ds);

// # Safety
// `ds` must be null or a handle not yet freed.
void picarz_dataset_free(struct PicarzDataset *ds);

// Mesh enveloping the `n` locations `(xs[i], ys[i])`.
//
// # Safety
// `xs` and `ys` must hold `n` values each and `out` be writable.
enum PicarzStatus picarz_mesh_build(const double *xs,
                                    const double *ys,
                                    size_t n,
                                    enum PicarzMeshMode mode,
                                    size_t target_vertices,
                                    double padding,
                                    struct PicarzMesh **out);

// # Safety
// `mesh` must be null or a live mesh handle.
size_t picarz_mesh_num_vertices(const struct PicarzMesh *mesh);

// # Safety
// `mesh` must be null or a live mesh handle.
size_t picarz_mesh_num_triangles(const struct PicarzMesh *mesh);

// # Safety
// `mesh` must be null or a handle not yet freed.
void picarz_mesh_free(struct PicarzMesh *mesh);

// Leading `p` Moran eigenvectors of the mesh graph.
//
// # Safety
// `mesh` must be a live mesh handle and `out` writable.
enum PicarzStatus picarz_basis_moran(const struct PicarzMesh *mesh,
                                     size_t p,
                                     struct PicarzBasis **out);

// # Safety
// `basis` must be null or a live basis handle.
size_t picarz_basis_rank(const struct PicarzBasis *basis);

// # Safety
// `basis` must be null or a live basis handle.
size_t picarz_basis_dim(const struct PicarzBasis *basis);

// Copy eigenvalues (descending) into `buf`, which must hold `rank` values.
//
// # Safety
// `basis` must be a live handle and `buf` writable for `len` values.
enum PicarzStatus picarz_basis_eigenvalues(const struct PicarzBasis *basis,
                                           double *buf,
                                           size_t len);

// Copy the `dim x rank` eigenvector matrix, column-major.
//
// # Safety
// `basis` must be a live handle and `buf` writable for `len` values.
enum PicarzStatus picarz_basis_vectors(const struct PicarzBasis *basis, double *buf, size_t len);

// # Safety
// `basis` must be null or a handle not yet freed.
void picarz_basis_free(struct PicarzBasis *basis);

// Fit one parameterization to the training rows of `ds`. `method` is e.g.
// `"picar"`; `p_o = p_p = 0` selects ranks with the heuristic.
//
// # Safety
// `ds` must be a live handle, strings nul-terminated, `out` writable.
enum PicarzStatus picarz_fit(const struct PicarzDataset *ds,
                             const char *family,
                             const char *method,
                             size_t target_vertices,
                             size_t p_o,
                             size_t p_p,
                             size_t iterations,
                             size_t burn_in,
                             uint64_t seed,
                             struct PicarzChain **out);

// Retained draws, or 0 for a null handle.
//
// # Safety
// `chain` must be null or a live chain handle.
size_t picarz_chain_len(const struct PicarzChain *chain);

// Number of scalar columns per draw.
//
// # Safety
// `chain` must be null or a live chain handle.
size_t picarz_chain_width(const struct PicarzChain *chain);

// Wall-clock seconds spent sampling.
//
// # Safety
// `chain` must be null or a live chain handle.
double picarz_chain_seconds(const struct PicarzChain *chain);

// Copy the draws of column `name` (e.g. `"beta_o_1"`) into `buf`.
//
// # Safety
// `chain` must be a live handle, `name` nul-terminated, `buf` writable for
// `len` values.
enum PicarzStatus picarz_chain_column(const struct PicarzChain *chain,
                                      const char *name,
                                      double *buf,
                                      size_t len);

// # Safety
// `chain` must be a live handle and `path` nul-terminated.
enum PicarzStatus picarz_chain_write_csv(const struct PicarzChain *chain, const char *path);

// # Safety
// `chain` must be null or a handle not yet freed.
void picarz_chain_free(struct PicarzChain *chain);

// Root mean squared prediction error of two length-`n` arrays.
//
// # Safety
// `truth` and `pred` must hold `n` values; `out` must be writable.
enum PicarzStatus picarz_rmspe(const double *truth, const double *pred, size_t n, double *out);

// Mann-Whitney AUC; `labels[i] != 0` marks a positive.
//
// # Safety
// `labels` and `scores` must hold `n` values; `out` must be writable.
enum PicarzStatus picarz_auc(const uint8_t *labels, const double *scores, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PICARZ_H */
