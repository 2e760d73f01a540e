#ifndef HCLAB_H
#define HCLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HclabStatus {
  HCLAB_STATUS_OK = 0,
  HCLAB_STATUS_NULL_POINTER = 1,
  HCLAB_STATUS_INVALID_INPUT = 2,
  HCLAB_STATUS_PARSE = 3,
  HCLAB_STATUS_UNSUPPORTED = 4,
  HCLAB_STATUS_PRECONDITION = 5,
  HCLAB_STATUS_NUMERICAL = 6,
  HCLAB_STATUS_INVALID_MESH = 7,
  HCLAB_STATUS_IO = 8,
  HCLAB_STATUS_PANIC = 9,
} HclabStatus;

typedef enum HclabClassification {
  HCLAB_CLASSIFICATION_CYLINDER = 0,
  HCLAB_CLASSIFICATION_MOBIUS_STRIP = 1,
  HCLAB_CLASSIFICATION_OTHER = 2,
} HclabClassification;

// Opaque surface mesh.
typedef struct HclabMesh HclabMesh;

// Opaque parameter set.
typedef struct HclabParams HclabParams;

typedef struct HclabTopology {
  enum HclabClassification classification;
  size_t boundary_components;
  bool orientable;
  int64_t euler;
} HclabTopology;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *hclab_last_error(void);

// # Safety
// `s` must be null or a string returned by this library.
void hclab_string_free(char *s);

// Parses a parameter file held in a NUL-terminated UTF-8 string.
//
// # Safety
// `json` must be a valid C string and `out` a valid pointer.
enum HclabStatus hclab_params_from_json(const char *json, struct HclabParams **out);

// # Safety
// `p` must be null or a handle from [`hclab_params_from_json`].
void hclab_params_free(struct HclabParams *p);

// # Safety
// `p` must be a valid handle; `n` and `cycle` valid pointers.
enum HclabStatus hclab_params_dims(const struct HclabParams *p, size_t *n, size_t *cycle);

// Evaluates the vector field at `x`; both arrays have `len == n` entries.
//
// # Safety
// `x` and `out` must point to `len` doubles.
enum HclabStatus hclab_vector_field(const struct HclabParams *p,
                                    const double *x,
                                    size_t len,
                                    double *out);

// Eigenvalue `sigma_j - rho_jk sigma_k` at saddle `O_k`, indices 1-based.
//
// # Safety
// `out` must be a valid pointer.
enum HclabStatus hclab_eigenvalue(const struct HclabParams *p, size_t k, size_t j, double *out);

// Runs every condition check. `all_pass` receives the verdict; when
// `report` is non-null it receives the full JSON report.
//
// # Safety
// `all_pass` must be valid; `report` null or valid.
enum HclabStatus hclab_check_all(const struct HclabParams *p, bool *all_pass, char **report);

// Integrates from `x0` to `t_end` with the default adaptive scheme and
// writes the final state to `out`.
//
// # Safety
// `x0` and `out` must point to `len` doubles.
enum HclabStatus hclab_integrate(const struct HclabParams *p,
                                 const double *x0,
                                 size_t len,
                                 double t_end,
                                 double *out);

// Builds the heteroclinic surface mesh.
//
// # Safety
// `out` must be a valid pointer.
enum HclabStatus hclab_build_gamma(const struct HclabParams *p,
                                   size_t m_angles,
                                   size_t m_arc,
                                   struct HclabMesh **out);

// # Safety
// `m` must be null or a handle from [`hclab_build_gamma`].
void hclab_mesh_free(struct HclabMesh *m);

// # Safety
// `vertices` and `triangles` must be valid pointers.
enum HclabStatus hclab_mesh_counts(const struct HclabMesh *m, size_t *vertices, size_t *triangles);

// # Safety
// `out` must be a valid pointer.
enum HclabStatus hclab_classify(const struct HclabMesh *m, struct HclabTopology *out);

// Topology of the combinatorial surface for cycle length `p >= 4`.
//
// # Safety
// `out` must be a valid pointer.
enum HclabStatus hclab_classify_combinatorial(size_t p, struct HclabTopology *out);

// Euclidean distances from `count` points, stored row after row in
// `points` with `len` entries each, to the mesh. The search index is built
// once per call.
//
// # Safety
// `points` must point to `count * len` doubles and `out` to `count`.
enum HclabStatus hclab_distance(const struct HclabMesh *m,
                                const double *points,
                                size_t count,
                                size_t len,
                                double *out);

// Chart coordinates of the orbit at angle `phi` and arclength fraction `u`
// in a fan whose corner sits at `b`.
//
// # Safety
// `u_out` and `v_out` must be valid pointers.
enum HclabStatus hclab_chart_map(double u, double phi, double b, double *u_out, double *v_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HCLAB_H */
