#ifndef DIDIV_H
#define DIDIV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by fallible functions.
 */
typedef enum DidivStatus {
  DidivStatus_Ok = 0,
  /**
   * Invalid argument (null pointer, bad UTF-8, unknown option).
   */
  DidivStatus_InvalidArgument = 1,
  /**
   * Estimation failed (empty groups, weak first stage, bad layout...).
   */
  DidivStatus_EstimationError = 2,
  /**
   * File system failure.
   */
  DidivStatus_IoError = 3,
} DidivStatus;

/**
 * Opaque dataset handle: a loaded table plus (after
 * [`didiv_derive_cohorts`]) its cohort assignment.
 */
typedef struct DidivDataset DidivDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer is valid
 * until the next failing call on the same thread; do not free it.
 */
const char *didiv_last_error(void);

/**
 * Library version as a static string; do not free.
 */
const char *didiv_version(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must be a pointer previously returned by a `*_json` function of this
 * library (or null), not yet freed.
 */
void didiv_string_free(char *s);

/**
 * Load a long-format CSV. `mode`: 0 = panel, 1 = repeated cross section.
 * `columns` may be null or a comma list of overrides (`unit=id,time=year`).
 * Returns null on failure.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `columns` may be null or a
 * valid NUL-terminated string.
 */
struct DidivDataset *didiv_dataset_load_csv(const char *path, int mode, const char *columns);

/**
 * Release a dataset handle.
 *
 * # Safety
 * `ds` must come from [`didiv_dataset_load_csv`] and not be freed twice.
 */
void didiv_dataset_free(struct DidivDataset *ds);

/**
 * Number of distinct units, or -1 on a null handle.
 *
 * # Safety
 * `ds` must be a valid handle or null.
 */
int64_t didiv_dataset_n_units(const struct DidivDataset *ds);

/**
 * Number of observation rows, or -1 on a null handle.
 *
 * # Safety
 * `ds` must be a valid handle or null.
 */
int64_t didiv_dataset_n_rows(const struct DidivDataset *ds);

/**
 * Derive exposure cohorts and the comparison set. `rule` is `never`,
 * `last`, or `set:1957,never`.
 *
 * # Safety
 * `ds` must be a valid handle; `rule` a valid NUL-terminated string.
 */
enum DidivStatus didiv_derive_cohorts(struct DidivDataset *ds, const char *rule);

/**
 * Structural validation findings as JSON; null on failure.
 *
 * # Safety
 * `ds` must be a valid handle with cohorts derived.
 */
char *didiv_validate_json(const struct DidivDataset *ds);

/**
 * Estimate every cohort-by-period cell; returns the JSON array of cell
 * results, or null on failure.
 *
 * # Safety
 * `ds` must be a valid handle with cohorts derived.
 */
char *didiv_estimate_cells_json(const struct DidivDataset *ds, double tau, int min_cell);

/**
 * Aggregate the cells into a summary parameter. `kind` is one of `es`,
 * `es-bal`, `sel`, `cal`, `cal-cumm`, `overall-w`, `overall-sel`; `lead`,
 * `max_lead`, `cohort`, and `period` are read as required by the kind.
 * Returns JSON or null.
 *
 * # Safety
 * `ds` must be a valid handle with cohorts derived; `kind` a valid string.
 */
char *didiv_aggregate_json(const struct DidivDataset *ds,
                           const char *kind,
                           int64_t lead,
                           int64_t max_lead,
                           int64_t cohort,
                           int64_t period,
                           int include_flagged,
                           double tau,
                           int min_cell);

/**
 * Two-way fixed-effects IV fit as JSON (with a bootstrap SE when
 * `boot_reps > 0`), or null.
 *
 * # Safety
 * `ds` must be a valid handle with cohorts derived.
 */
char *didiv_twfeiv_json(const struct DidivDataset *ds, double tau, int boot_reps, uint64_t seed);

/**
 * Decompose the TWFEIV coefficient for a two-cohort layout. Pass
 * `use_default_base != 0` to use the early cohort's last pre-exposure
 * period. Returns JSON or null.
 *
 * # Safety
 * `ds` must be a valid handle with cohorts derived.
 */
char *didiv_decompose_json(const struct DidivDataset *ds,
                           double tau,
                           int64_t base,
                           int use_default_base);

/**
 * Placebo pre-trend tests as JSON, or null.
 *
 * # Safety
 * `ds` must be a valid handle with cohorts derived.
 */
char *didiv_pretrend_json(const struct DidivDataset *ds, int max_lead);

/**
 * Draw a sample from a spec (TOML text) and write `data.csv`/`audit.csv`
 * into `out_dir`.
 *
 * # Safety
 * `spec_toml` and `out_dir` must be valid NUL-terminated strings.
 */
enum DidivStatus didiv_simulate_csv(const char *spec_toml,
                                    uint64_t n,
                                    uint64_t seed,
                                    int mode,
                                    const char *out_dir);

/**
 * Exact population estimands of a spec (TOML text) as JSON, or null.
 *
 * # Safety
 * `spec_toml` must be a valid NUL-terminated string.
 */
char *didiv_oracle_json(const char *spec_toml);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIDIV_H */
