#ifndef THINSURF_H
#define THINSURF_H

/* Generated by cbindgen; edit the Rust source instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by fallible calls.
 */
typedef enum ts_status {
  TS_OK = 0,
  TS_INVALID_ARGUMENT = 1,
  TS_DATA_ERROR = 2,
  TS_NUMERICAL_ERROR = 3,
  TS_OUT_OF_DOMAIN = 4,
  TS_PANIC = 5,
} ts_status;

/**
 * Opaque point cloud.
 */
typedef struct TsCloud TsCloud;

/**
 * Opaque pipeline configuration.
 */
typedef struct TsConfig TsConfig;

/**
 * Opaque fitted implicit field.
 */
typedef struct TsField TsField;

/**
 * Opaque triangle mesh.
 */
typedef struct TsMesh TsMesh;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent error on this thread. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *ts_last_error_message(void);

/**
 * A configuration populated with the reference defaults.
 */
struct TsConfig *ts_config_new(void);

/**
 * Set one key (the configuration-file key names) from its textual value.
 *
 * # Safety
 * `key` and `value` must be valid NUL-terminated strings; `config` must be a
 * live handle from `ts_config_new`.
 */
enum ts_status ts_config_set(struct TsConfig *config, const char *key, const char *value);

/**
 * Check every configuration invariant.
 */
enum ts_status ts_config_validate(const struct TsConfig *config);

/**
 * # Safety
 * `config` must be a handle from `ts_config_new`, not freed twice.
 */
void ts_config_free(struct TsConfig *config);

/**
 * Load a point cloud (.xyz or .ply by extension). NULL on failure.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct TsCloud *ts_cloud_load(const char *path);

size_t ts_cloud_point_count(const struct TsCloud *cloud);

/**
 * # Safety
 * `cloud` must be a handle from `ts_cloud_load`, not freed twice.
 */
void ts_cloud_free(struct TsCloud *cloud);

/**
 * Run the fitting stages (clean, normals, augment, partition, fit) and
 * return the implicit field. NULL on failure.
 */
struct TsField *ts_field_fit(const struct TsConfig *config, const struct TsCloud *cloud);

/**
 * Field value at a point; `TS_OUT_OF_DOMAIN` when the point is outside the
 * evaluation domain.
 */
enum ts_status ts_field_value(const struct TsField *field,
                              double x,
                              double y,
                              double z,
                              double *out);

/**
 * Analytic gradient; `out` receives three doubles.
 */
enum ts_status ts_field_gradient(const struct TsField *field,
                                 double x,
                                 double y,
                                 double z,
                                 double *out);

/**
 * Mean curvature of the level set through the point.
 */
enum ts_status ts_field_mean_curvature(const struct TsField *field,
                                       double x,
                                       double y,
                                       double z,
                                       double *out);

/**
 * Extract the zero level set on a grid of the given step, with per-vertex
 * mean curvature attached. NULL on failure.
 */
struct TsMesh *ts_field_extract_mesh(const struct TsField *field, double iso_step);

/**
 * # Safety
 * `field` must be a handle from `ts_field_fit`, not freed twice.
 */
void ts_field_free(struct TsField *field);

size_t ts_mesh_vertex_count(const struct TsMesh *mesh);

size_t ts_mesh_triangle_count(const struct TsMesh *mesh);

/**
 * Copy xyz triples into `out`, which must hold `3 * vertex_count` doubles.
 */
enum ts_status ts_mesh_copy_vertices(const struct TsMesh *mesh, double *out);

/**
 * Copy index triples into `out`, which must hold `3 * triangle_count` u32s.
 */
enum ts_status ts_mesh_copy_triangles(const struct TsMesh *mesh, uint32_t *out);

/**
 * Copy a named per-vertex scalar channel (`mean_curvature` after
 * extraction); `out` must hold `vertex_count` doubles. Undefined entries are
 * NaN.
 *
 * # Safety
 * `name` must be a valid NUL-terminated string.
 */
enum ts_status ts_mesh_copy_scalar(const struct TsMesh *mesh, const char *name, double *out);

/**
 * Write the mesh (.obj or .ply by extension).
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
enum ts_status ts_mesh_save(const struct TsMesh *mesh, const char *path);

/**
 * # Safety
 * `mesh` must be a handle from `ts_field_extract_mesh`, not freed twice.
 */
void ts_mesh_free(struct TsMesh *mesh);

/**
 * Full pipeline: read a cloud, fit, extract, write the mesh.
 *
 * # Safety
 * `input` and `output` must be valid NUL-terminated strings.
 */
enum ts_status ts_reconstruct_file(const struct TsConfig *config,
                                   const char *input,
                                   const char *output);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THINSURF_H */
