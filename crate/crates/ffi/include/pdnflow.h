/* C interface to the pdnflow IR drop workbench. */

#ifndef PDNFLOW_H
#define PDNFLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for every fallible call.
 */
typedef enum PdnStatus {
  PdnOk = 0,
  PdnInvalidArgument = 1,
  PdnParseError = 2,
  PdnValidationError = 3,
  PdnSolveError = 4,
  PdnIoError = 5,
  PdnInternalError = 6,
} PdnStatus;

/**
 * Opaque PDN graph handle.
 */
typedef struct PdnGraph PdnGraph;

/**
 * Opaque voltage-drop map handle (row-major, row 0 at y = 0).
 */
typedef struct PdnIrMap PdnIrMap;

/**
 * Opaque layout handle.
 */
typedef struct PdnLayout PdnLayout;

/**
 * Opaque trained-model handle.
 */
typedef struct PdnModel PdnModel;

/**
 * Generator request mirrored across the ABI. When `strip_pitch_um`
 * is positive it wins; otherwise `strips`/`n_strips` supply explicit
 * strip x positions.
 */
typedef struct PdnGenSpec {
  double width_um;
  double height_um;
  uintptr_t n_cells;
  double strip_pitch_um;
  const double *strips;
  uintptr_t n_strips;
  double power_scale_w;
  uintptr_t t_sim;
  uint64_t rng_seed;
} PdnGenSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent error on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *pdn_last_error_message(void);

/**
 * Version tag of the checkpoint container format.
 */
const char *pdn_checkpoint_format_version(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must have been returned by a pdnflow function and not freed yet.
 */
void pdn_string_free(char *s);

/**
 * Parse a layout file's contents.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string; `out` must be a valid
 * pointer.
 */
enum PdnStatus pdn_layout_parse(const char *text, struct PdnLayout **out);

/**
 * Generate a synthetic layout from `spec`.
 *
 * # Safety
 * `spec` and `out` must be valid pointers; when `strip_pitch_um <= 0`,
 * `strips` must point to `n_strips` readable doubles.
 */
enum PdnStatus pdn_layout_generate(const struct PdnGenSpec *spec, struct PdnLayout **out);

/**
 * Serialize a layout to its canonical text form. The returned string
 * must be released with `pdn_string_free`.
 *
 * # Safety
 * `layout` must be a live handle; `out` must be valid.
 */
enum PdnStatus pdn_layout_serialize(const struct PdnLayout *layout, char **out);

/**
 * Number of placed cells.
 *
 * # Safety
 * `layout` must be a live handle.
 */
uintptr_t pdn_layout_cell_count(const struct PdnLayout *layout);

/**
 * # Safety
 * `layout` must be a live handle or null; double free is undefined.
 */
void pdn_layout_free(struct PdnLayout *layout);

/**
 * Solve the dynamic IR drop for `layout` on a dx-by-dy tile grid and
 * return the peak-over-frames map.
 *
 * # Safety
 * `layout` must be a live handle; `out` must be valid.
 */
enum PdnStatus pdn_simulate_peak(const struct PdnLayout *layout,
                                 double dx_um,
                                 double dy_um,
                                 struct PdnIrMap **out);

/**
 * # Safety
 * `map` must be a live handle.
 */
uintptr_t pdn_irmap_rows(const struct PdnIrMap *map);

/**
 * # Safety
 * `map` must be a live handle.
 */
uintptr_t pdn_irmap_cols(const struct PdnIrMap *map);

/**
 * Copy the row-major drop values (volts) into `buf`.
 *
 * # Safety
 * `map` must be a live handle and `buf` must point to `len` writable
 * doubles with `len` = rows * cols.
 */
enum PdnStatus pdn_irmap_copy(const struct PdnIrMap *map, double *buf, uintptr_t len);

/**
 * # Safety
 * `map` must be a live handle or null; double free is undefined.
 */
void pdn_irmap_free(struct PdnIrMap *map);

/**
 * Build the directed PDN graph for `layout` on a dx-by-dy tile grid.
 *
 * # Safety
 * `layout` must be a live handle; `out` must be valid.
 */
enum PdnStatus pdn_graph_build(const struct PdnLayout *layout,
                               double dx_um,
                               double dy_um,
                               struct PdnGraph **out);

/**
 * # Safety
 * `graph` must be a live handle.
 */
uintptr_t pdn_graph_num_nodes(const struct PdnGraph *graph);

/**
 * # Safety
 * `graph` must be a live handle.
 */
uintptr_t pdn_graph_num_edges(const struct PdnGraph *graph);

/**
 * # Safety
 * `graph` must be a live handle.
 */
uintptr_t pdn_graph_num_channels(const struct PdnGraph *graph);

/**
 * Copy the row-major node-feature matrix (num_nodes * num_channels).
 *
 * # Safety
 * `graph` must be a live handle; `buf` must hold `len` doubles.
 */
enum PdnStatus pdn_graph_copy_features(const struct PdnGraph *graph, double *buf, uintptr_t len);

/**
 * Copy directed edges as (src, dst) pairs; `len` counts u32 slots and
 * must equal 2 * num_edges.
 *
 * # Safety
 * `graph` must be a live handle; `buf` must hold `len` u32 values.
 */
enum PdnStatus pdn_graph_copy_edges(const struct PdnGraph *graph, uint32_t *buf, uintptr_t len);

/**
 * # Safety
 * `graph` must be a live handle or null; double free is undefined.
 */
void pdn_graph_free(struct PdnGraph *graph);

/**
 * Load a trained checkpoint (PDNF1 container).
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must be valid.
 */
enum PdnStatus pdn_model_load(const char *path, struct PdnModel **out);

/**
 * Predict the normalized IR drop map for a layout. The result map has
 * the tile-grid shape and unitless [0,1]-scale values.
 *
 * # Safety
 * `model` and `layout` must be live handles; `out` must be valid.
 */
enum PdnStatus pdn_model_predict(const struct PdnModel *model,
                                 const struct PdnLayout *layout,
                                 double dx_um,
                                 double dy_um,
                                 struct PdnIrMap **out);

/**
 * # Safety
 * `model` must be a live handle or null; double free is undefined.
 */
void pdn_model_free(struct PdnModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PDNFLOW_H */
