#ifndef TFCHAIN_H
#define TFCHAIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum TfcStatus {
  TFC_STATUS_OK = 0,
  TFC_STATUS_NULL_POINTER = 1,
  TFC_STATUS_INVALID_UTF8 = 2,
  TFC_STATUS_CONFIG = 3,
  TFC_STATUS_INVALID_ARGUMENT = 4,
  TFC_STATUS_NUMERICAL = 5,
  TFC_STATUS_SIZE = 6,
  TFC_STATUS_IO = 7,
  TFC_STATUS_BUFFER_TOO_SMALL = 8,
  TFC_STATUS_NOT_FOUND = 9,
  TFC_STATUS_PANIC = 10,
} TfcStatus;

/**
 * Chain coefficients of one or two reservoirs.
 */
typedef struct TfcChains TfcChains;

/**
 * Parsed run configuration.
 */
typedef struct TfcConfig TfcConfig;

/**
 * Time series produced by a run.
 */
typedef struct TfcSeries TfcSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *tfc_version(void);

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next `tfc_*` call on the same thread.
 */
const char *tfc_last_error(void);

/**
 * Parses `key = value` config text.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum TfcStatus tfc_config_parse(const char *text, struct TfcConfig **out);

/**
 * Reads a config file; relative table paths resolve against its directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum TfcStatus tfc_config_from_file(const char *path, struct TfcConfig **out);

/**
 * Sets or replaces one key.
 *
 * # Safety
 * `config` must come from `tfc_config_*`; strings must be NUL-terminated.
 */
enum TfcStatus tfc_config_set(struct TfcConfig *config, const char *key, const char *value);

/**
 * Releases a config. NULL is ignored.
 *
 * # Safety
 * `config` must come from `tfc_config_*` and not be used afterwards.
 */
void tfc_config_free(struct TfcConfig *config);

/**
 * Runs a time-series subcommand (`evolve-mps`, `evolve-me`,
 * `exact-dephasing`, `exact-ed`) and returns its observables.
 *
 * # Safety
 * `config` must be a live handle; `subcommand` NUL-terminated; `out` writable.
 */
enum TfcStatus tfc_run(const struct TfcConfig *config,
                       const char *subcommand_name,
                       struct TfcSeries **out);

/**
 * Runs any subcommand and writes its files as the command-line tool does.
 * NULL `output_dir` or `label` fall back to `run.output_dir` and `run.label`.
 *
 * # Safety
 * `config` must be a live handle; non-NULL strings must be NUL-terminated.
 */
enum TfcStatus tfc_run_to_dir(const struct TfcConfig *config,
                              const char *subcommand_name,
                              const char *output_dir,
                              const char *label);

/**
 * Number of recorded times.
 *
 * # Safety
 * `series` must be a live handle; `len` writable.
 */
enum TfcStatus tfc_series_len(const struct TfcSeries *series, size_t *len);

/**
 * Number of real columns (complex observables count twice).
 *
 * # Safety
 * `series` must be a live handle; `count` writable.
 */
enum TfcStatus tfc_series_column_count(const struct TfcSeries *series, size_t *count);

/**
 * Name of column `index`. Writes at most `capacity` bytes including the
 * terminating NUL; `needed` (optional) receives the full size.
 *
 * # Safety
 * `series` must be a live handle; `buffer` must hold `capacity` bytes.
 */
enum TfcStatus tfc_series_column_name(const struct TfcSeries *series,
                                      size_t index,
                                      char *buffer,
                                      size_t capacity,
                                      size_t *needed);

/**
 * Copies the time grid into `out` (at least `tfc_series_len` values).
 *
 * # Safety
 * `series` must be a live handle; `out` must hold `capacity` doubles.
 */
enum TfcStatus tfc_series_times(const struct TfcSeries *series, double *out, size_t capacity);

/**
 * Copies column `name` into `out` (at least `tfc_series_len` values).
 *
 * # Safety
 * `series` must be a live handle; `name` NUL-terminated; `out` must hold
 * `capacity` doubles.
 */
enum TfcStatus tfc_series_column(const struct TfcSeries *series,
                                 const char *name,
                                 double *out,
                                 size_t capacity);

/**
 * Releases a series. NULL is ignored.
 *
 * # Safety
 * `series` must come from `tfc_run` and not be used afterwards.
 */
void tfc_series_free(struct TfcSeries *series);

/**
 * Chain coefficients for the configured bath.
 *
 * # Safety
 * `config` must be a live handle; `out` writable.
 */
enum TfcStatus tfc_chain_coefficients(const struct TfcConfig *config, struct TfcChains **out);

/**
 * Number of chains: 1 at zero temperature, otherwise 2.
 *
 * # Safety
 * `chains` must be a live handle; `count` writable.
 */
enum TfcStatus tfc_chains_count(const struct TfcChains *chains, size_t *count);

/**
 * Chain `index`: its reservoir number (1 or 2), length, on-site energies
 * `alphas` and `betas` (`betas[0]` is the total weight). Either array may be
 * NULL to query the length first.
 *
 * # Safety
 * `chains` must be a live handle; non-NULL arrays must hold `capacity`
 * doubles; `reservoir` and `len` writable.
 */
enum TfcStatus tfc_chains_get(const struct TfcChains *chains,
                              size_t index,
                              uint32_t *reservoir,
                              size_t *len,
                              double *alphas,
                              double *betas,
                              size_t capacity);

/**
 * Releases chains. NULL is ignored.
 *
 * # Safety
 * `chains` must come from `tfc_chain_coefficients` and not be used afterwards.
 */
void tfc_chains_free(struct TfcChains *chains);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TFCHAIN_H */
