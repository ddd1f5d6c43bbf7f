#ifndef ALPHASNE_H
#define ALPHASNE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AsneStatus {
  ASNE_STATUS_OK = 0,
  ASNE_STATUS_NULL_POINTER = 1,
  ASNE_STATUS_INVALID_INPUT = 2,
  ASNE_STATUS_DIMENSION_MISMATCH = 3,
  ASNE_STATUS_NUMERICAL = 4,
  ASNE_STATUS_IO = 5,
  ASNE_STATUS_PARSE = 6,
  ASNE_STATUS_PANIC = 7,
} AsneStatus;

// Input data with its calibrated neighbor probabilities.
typedef struct AsneAffinity AsneAffinity;

// An optimized map with its cost and retrieval curve.
typedef struct AsneEmbedding AsneEmbedding;

// Optimizer and evaluation settings for [`asne_embed`] and
// [`asne_estimate_alpha`].
typedef struct AsneEmbedConfig {
  double alpha;
  double learning_rate;
  size_t max_iters;
  uint64_t seed;
  size_t output_dim;
  // Input neighborhood size used for the retrieval AUC.
  size_t k_input;
  // Largest output neighborhood size used for the retrieval AUC.
  size_t k_max;
  // Nonzero: stop once the cost has converged.
  int32_t stop_on_convergence;
} AsneEmbedConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into the library from the same thread.
const char *asne_last_error(void);

// Library version as a static NUL-terminated string.
const char *asne_version(void);

// Library defaults.
struct AsneEmbedConfig asne_embed_config_default(void);

// Calibrates input probabilities for `n` points of dimension `dim`, given
// row-major in `data`. A perplexity of 0 selects the default.
//
// # Safety
// `data` must point to `n * dim` readable doubles and `out` must be writable.
enum AsneStatus asne_affinity_new(const double *data,
                                  size_t n,
                                  size_t dim,
                                  double perplexity,
                                  int32_t standardize,
                                  struct AsneAffinity **out);

// Number of points of an affinity handle, 0 for null.
//
// # Safety
// `affinity` must be null or a live handle.
size_t asne_affinity_n_points(const struct AsneAffinity *affinity);

// # Safety
// `affinity` must be null or come from [`asne_affinity_new`], and must not
// be used afterwards.
void asne_affinity_free(struct AsneAffinity *affinity);

// Optimizes and scores a map.
//
// # Safety
// `affinity` and `config` must be valid; `out` must be writable.
enum AsneStatus asne_embed(const struct AsneAffinity *affinity,
                           const struct AsneEmbedConfig *config,
                           struct AsneEmbedding **out);

// Number of map points, 0 for null.
//
// # Safety
// `embedding` must be null or a live handle.
size_t asne_embedding_n_points(const struct AsneEmbedding *embedding);

// Map dimension, 0 for null.
//
// # Safety
// `embedding` must be null or a live handle.
size_t asne_embedding_dim(const struct AsneEmbedding *embedding);

// Copies the coordinates, row-major, into `out` of length `len`, which
// must equal points times dimension.
//
// # Safety
// `out` must point to `len` writable doubles.
enum AsneStatus asne_embedding_coords(const struct AsneEmbedding *embedding,
                                      double *out,
                                      size_t len);

// Final alpha-SNE cost, NaN for null.
//
// # Safety
// `embedding` must be null or a live handle.
double asne_embedding_cost(const struct AsneEmbedding *embedding);

// Retrieval AUC of the map against its input data, NaN for null.
//
// # Safety
// `embedding` must be null or a live handle.
double asne_embedding_auc(const struct AsneEmbedding *embedding);

// # Safety
// `embedding` must be null or come from [`asne_embed`], and must not be
// used afterwards.
void asne_embedding_free(struct AsneEmbedding *embedding);

// Alpha-divergence between two probability vectors of length `len`.
//
// # Safety
// `p` and `q` must point to `len` readable doubles; `out` must be writable.
enum AsneStatus asne_alpha_divergence(const double *p,
                                      const double *q,
                                      size_t len,
                                      double alpha,
                                      double *out);

// Retrieval AUC of `output` (`n` x `output_dim`) against `input`
// (`n` x `input_dim`), both row-major.
//
// # Safety
// The buffers must hold the stated number of doubles; `out` must be
// writable.
enum AsneStatus asne_retrieval_auc(const double *input,
                                   size_t input_dim,
                                   const double *output,
                                   size_t output_dim,
                                   size_t n,
                                   size_t k_input,
                                   size_t k_max,
                                   double *out);

// Embeds once per grid value with `config` (its alpha is ignored) and
// writes the alpha selected by score matching to `out_alpha`. If
// `out_objectives` is not null it receives one objective per grid value,
// NaN for failed candidates.
//
// # Safety
// `grid` must hold `grid_len` doubles, `out_objectives` (if not null)
// `grid_len` writable doubles.
enum AsneStatus asne_estimate_alpha(const struct AsneAffinity *affinity,
                                    const struct AsneEmbedConfig *config,
                                    const double *grid,
                                    size_t grid_len,
                                    double *out_alpha,
                                    double *out_objectives);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALPHASNE_H */
