#ifndef RFPERM_H
#define RFPERM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * How the tested features are muted.
 */
typedef enum RfpStrategy {
  RFP_STRATEGY_PERMUTE = 0,
  RFP_STRATEGY_EXCLUDE = 1,
} RfpStrategy;

/**
 * Status codes returned by every fallible function.
 */
typedef enum RfpStatus {
  RFP_STATUS_OK = 0,
  RFP_STATUS_NULL_POINTER = 1,
  RFP_STATUS_INVALID_ARGUMENT = 2,
  RFP_STATUS_SCHEMA = 3,
  RFP_STATUS_PARSE = 4,
  RFP_STATUS_VALIDATION = 5,
  RFP_STATUS_IO = 6,
  RFP_STATUS_SERIALIZATION = 7,
  RFP_STATUS_UTF8 = 8,
  RFP_STATUS_PANIC = 9,
} RfpStatus;

/**
 * Opaque dataset handle.
 */
typedef struct RfpDataset RfpDataset;

/**
 * Opaque test result handle.
 */
typedef struct RfpResult RfpResult;

/**
 * Forest settings. Zero in `subsample_size`, `mtry` or `max_depth` selects
 * the default (exponent rule, `ceil(p/3)`, unlimited).
 */
typedef struct RfpForestOptions {
  size_t n_trees;
  double subsample_exponent;
  size_t subsample_size;
  size_t mtry;
  size_t min_node_size;
  size_t max_depth;
  double min_split_fraction;
  uint64_t seed;
} RfpForestOptions;

/**
 * Permutation loop settings. `mute_seed` drives the row permutation of the
 * permute strategy.
 */
typedef struct RfpTestOptions {
  size_t n_perm;
  uint64_t perm_seed;
  uint64_t mute_seed;
  enum RfpStrategy strategy;
} RfpTestOptions;

typedef struct RfpDiagnostics {
  size_t n;
  size_t k;
  size_t n_trees;
  double pair_disjoint_prob;
  /**
   * `-inf` when two subsamples can never be disjoint.
   */
  double lemma1_log_term;
  bool warning;
} RfpDiagnostics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Defaults: 125 trees, exponent 0.6, fully grown trees, seed 0.
 */
struct RfpForestOptions rfp_forest_options_default(void);

/**
 * Defaults: 500 permutations, permute strategy, seeds 0.
 */
struct RfpTestOptions rfp_test_options_default(void);

/**
 * Load a CSV with a header row; non-numeric columns become categorical.
 */
enum RfpStatus rfp_dataset_from_csv(const char *path,
                                    const char *response,
                                    struct RfpDataset **out);

/**
 * Numeric dataset from a column-major `n × p` matrix `x` and responses `y`.
 * Features are named `x1..xp`.
 */
enum RfpStatus rfp_dataset_from_columns(const double *x,
                                        size_t n,
                                        size_t p,
                                        const double *y,
                                        struct RfpDataset **out);

void rfp_dataset_free(struct RfpDataset *d);

/**
 * Number of rows, or 0 for a null handle.
 */
size_t rfp_dataset_nrows(const struct RfpDataset *d);

/**
 * Number of feature columns, or 0 for a null handle.
 */
size_t rfp_dataset_ncols(const struct RfpDataset *d);

/**
 * Zero-based index of the feature called `name`.
 */
enum RfpStatus rfp_dataset_feature_index(const struct RfpDataset *d, const char *name, size_t *out);

/**
 * Random train/test split with `floor(test_fraction · n)` test rows.
 */
enum RfpStatus rfp_dataset_split(const struct RfpDataset *d,
                                 double test_fraction,
                                 uint64_t seed,
                                 struct RfpDataset **train_out,
                                 struct RfpDataset **test_out);

/**
 * Test whether the features at `features[0..n_features]` improve test MSE.
 */
enum RfpStatus rfp_run_test(const struct RfpDataset *train,
                            const struct RfpDataset *test,
                            const size_t *features,
                            size_t n_features,
                            const struct RfpForestOptions *forest,
                            const struct RfpTestOptions *options,
                            struct RfpResult **out);

/**
 * As [`rfp_run_test`] with knockoffs: `knockoffs` is column-major with one
 * column of `n_train` values per tested feature, or one per feature.
 */
enum RfpStatus rfp_run_test_knockoff(const struct RfpDataset *train,
                                     const struct RfpDataset *test,
                                     const size_t *features,
                                     size_t n_features,
                                     const double *knockoffs,
                                     size_t knockoff_cols,
                                     const struct RfpForestOptions *forest,
                                     const struct RfpTestOptions *options,
                                     struct RfpResult **out);

/**
 * Test all features jointly. The exclude strategy is rejected.
 */
enum RfpStatus rfp_overall_test(const struct RfpDataset *train,
                                const struct RfpDataset *test,
                                const struct RfpForestOptions *forest,
                                const struct RfpTestOptions *options,
                                struct RfpResult **out);

void rfp_result_free(struct RfpResult *r);

/**
 * NaN for a null handle.
 */
double rfp_result_p_value(const struct RfpResult *r);

/**
 * NaN for a null handle.
 */
double rfp_result_z_score(const struct RfpResult *r);

/**
 * NaN for a null handle.
 */
double rfp_result_delta_observed(const struct RfpResult *r);

/**
 * NaN for a null handle.
 */
double rfp_result_mse_original(const struct RfpResult *r);

/**
 * NaN for a null handle.
 */
double rfp_result_mse_muted(const struct RfpResult *r);

/**
 * True when the permuted deltas have zero spread (z-score reported as 0).
 */
bool rfp_result_degenerate(const struct RfpResult *r);

/**
 * Number of permuted deltas, or 0 for a null handle.
 */
size_t rfp_result_n_perm(const struct RfpResult *r);

/**
 * Copy the permuted deltas into `buf`, which must hold `rfp_result_n_perm` values.
 */
enum RfpStatus rfp_result_copy_deltas(const struct RfpResult *r, double *buf, size_t len);

/**
 * JSON report of the result. Free the string with `rfp_string_free`.
 */
enum RfpStatus rfp_result_to_json(const struct RfpResult *r, char **out);

void rfp_string_free(char *s);

/**
 * Exact pairwise disjointness probability and the log term for `b` trees.
 */
enum RfpStatus rfp_subsample_diagnostics(size_t n, size_t k, size_t b, struct RfpDiagnostics *out);

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *rfp_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *rfp_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RFPERM_H */
