/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the multicolumn set-aggregation library.
 *
 * Objects are opaque handles created by mnet_*_generate/read/load/train/init
 * and released with the matching mnet_*_free. Every fallible call returns an
 * mnet_status; on failure mnet_last_error() holds a message for the calling
 * thread until its next failing call.
 */
#ifndef MNET_MNET_H
#define MNET_MNET_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MNET_API __declspec(dllexport)
#else
#define MNET_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mnet_status {
  MNET_OK = 0,
  MNET_ERR_CONFIG = 1,
  MNET_ERR_DEGENERATE = 2,
  MNET_ERR_USAGE = 3,
  MNET_ERR_PROTOCOL = 4,
  MNET_ERR_IO = 5,
  MNET_ERR_PARSE = 6,
  MNET_ERR_ORACLE = 7,
  MNET_ERR_DIVERGED = 8,
  MNET_ERR_INTERNAL = 9
} mnet_status;

typedef enum mnet_mode { MNET_MODE_AVG = 0, MNET_MODE_MN_V = 1, MNET_MODE_MN_VC = 2 } mnet_mode;

typedef struct mnet_corpus mnet_corpus;
typedef struct mnet_model mnet_model;
typedef struct mnet_evaluation mnet_evaluation;

MNET_API const char* mnet_last_error(void);
MNET_API const char* mnet_status_string(mnet_status status);
/* "avg", "mn-v" or "mn-vc". */
MNET_API const char* mnet_mode_name(mnet_mode mode);
MNET_API mnet_status mnet_mode_parse(const char* name, mnet_mode* out);

/* ---- corpus ---------------------------------------------------------- */

typedef struct mnet_synthetic_config {
  uint32_t num_identities;
  uint32_t sets_per_identity;
  uint32_t set_size_min;
  uint32_t set_size_max;
  uint32_t dim;
  double prototype_norm;
  double noise_sigma_clean;
  double noise_sigma_aberrant;
  double aberrant_fraction;
  double degradation_strength;
  uint32_t content_subspace_rank;
  double content_fraction;
  double content_strength;
  double test_fraction;
  uint64_t seed;
} mnet_synthetic_config;

MNET_API void mnet_synthetic_config_default(mnet_synthetic_config* config);
MNET_API mnet_status mnet_corpus_generate(const mnet_synthetic_config* config, mnet_corpus** out);
/* Reads the corpus and its sidecar split manifest (<basename>.json) if present. */
MNET_API mnet_status mnet_corpus_read(const char* path, mnet_corpus** out);
/* Writes the corpus and, if it has one, its split manifest. */
MNET_API mnet_status mnet_corpus_write(const mnet_corpus* corpus, const char* path);
MNET_API void mnet_corpus_free(mnet_corpus* corpus);

typedef struct mnet_corpus_summary {
  uint32_t dim;
  uint64_t records;
  uint64_t templates;
  uint64_t identities;
  int has_split;
  uint64_t train_identities;
  uint64_t test_identities;
  uint64_t records_with_quality;
  uint64_t aberrant_records;
} mnet_corpus_summary;

MNET_API mnet_status mnet_corpus_summary_get(const mnet_corpus* corpus, mnet_corpus_summary* out);

/* ---- models ---------------------------------------------------------- */

typedef struct mnet_train_config {
  mnet_mode mode; /* MN_V or MN_VC */
  uint32_t set_size;
  uint32_t batch_size;
  uint32_t sets_per_identity;
  double lr_initial;
  double lr_decay_factor;
  uint32_t plateau_patience;
  uint32_t max_epochs;
  double weight_decay;
  uint64_t seed;
  int gate_bias;
  uint32_t threads;
} mnet_train_config;

typedef void (*mnet_epoch_callback)(uint32_t epoch, double loss, double lr, void* user);

MNET_API void mnet_train_config_default(mnet_train_config* config);
/* Trains on the corpus' train split. `callback` may be NULL. */
MNET_API mnet_status mnet_train(const mnet_corpus* corpus, const mnet_train_config* config,
                                mnet_epoch_callback callback, void* user, mnet_model** out);
/* Fresh parameters: zero gates and a seeded N(0, 2/D) classifier. */
MNET_API mnet_status mnet_model_init(uint32_t dim, uint32_t classes, uint64_t seed, int gate_bias,
                                     mnet_mode mode, mnet_model** out);
MNET_API mnet_status mnet_model_load(const char* path, mnet_model** out);
MNET_API mnet_status mnet_model_save(const mnet_model* model, const char* path);
MNET_API void mnet_model_free(mnet_model* model);

typedef struct mnet_model_info {
  uint32_t dim;
  uint32_t classes;
  int gate_bias;
  mnet_mode mode;
  uint32_t epoch;
  uint64_t gate_parameters;
  char config_hash[65];
} mnet_model_info;

MNET_API mnet_status mnet_model_info_get(const mnet_model* model, mnet_model_info* out);

/* ---- evaluation ------------------------------------------------------ */

#define MNET_REPORT_FAR_COUNT 5

/* FAR targets of the report table: 1e-5, 1e-4, 1e-3, 1e-2, 1e-1. */
MNET_API double mnet_report_far(size_t index);

typedef struct mnet_eval_config {
  const mnet_mode* modes; /* evaluated in the given order */
  size_t mode_count;
  const mnet_model* model_mn_v;  /* required when MN_V is requested */
  const mnet_model* model_mn_vc; /* required when MN_VC is requested */
  int sampled_pairs;             /* 0: all pairs, 1: sampled impostors */
  uint32_t impostors_per_genuine;
  uint64_t pair_seed;
  uint32_t threads;
} mnet_eval_config;

typedef struct mnet_report_row {
  mnet_mode mode;
  double tar[MNET_REPORT_FAR_COUNT];
  int flagged[MNET_REPORT_FAR_COUNT];
  uint64_t n_genuine;
  uint64_t n_impostor;
  uint64_t excluded_pairs;
  char config_hash[65];
} mnet_report_row;

MNET_API void mnet_eval_config_default(mnet_eval_config* config);
/* 1:1 verification over the test split. */
MNET_API mnet_status mnet_evaluate(const mnet_corpus* corpus, const mnet_eval_config* config,
                                   mnet_evaluation** out);
MNET_API size_t mnet_evaluation_count(const mnet_evaluation* evaluation);
MNET_API mnet_status mnet_evaluation_row(const mnet_evaluation* evaluation, size_t index,
                                         mnet_report_row* out);
/* Writes <prefix>.<mode>.json and <prefix>.<mode>.csv per evaluated mode. */
MNET_API mnet_status mnet_evaluation_write(const mnet_evaluation* evaluation, const char* prefix);
MNET_API void mnet_evaluation_free(mnet_evaluation* evaluation);

/* ---- inspection ------------------------------------------------------ */

typedef struct mnet_member_quality {
  uint32_t media_id;
  double alpha;
  double beta;
  double gamma;
  int has_quality;
  float quality_truth;
} mnet_member_quality;

/*
 * Per-member scores of one template sorted by gamma descending. Call with
 * rows == NULL to query the member count. `model` may be NULL for AVG.
 */
MNET_API mnet_status mnet_inspect(const mnet_corpus* corpus, const mnet_model* model,
                                  uint32_t template_id, mnet_mode mode, mnet_member_quality* rows,
                                  size_t capacity, size_t* count);

/* Mean Spearman correlation of alpha with quality_truth over test templates. */
MNET_API mnet_status mnet_quality_correlation(const mnet_corpus* corpus, const mnet_model* model,
                                              mnet_mode mode, double* mean, uint64_t* sets_used);

#ifdef __cplusplus
}
#endif

#endif /* MNET_MNET_H */
