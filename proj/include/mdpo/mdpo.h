// Copyright 2026 The MDPO Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
/* Stable C interface to the MDPO toolkit.
 *
 * Objects are opaque handles released with the matching *_free function.
 * Every call returns an mdpo_status; on failure mdpo_last_error() describes
 * the problem for the calling thread. Strings returned through char** out
 * parameters are owned by the caller and released with mdpo_free_string.
 */

#ifndef MDPO_MDPO_H_
#define MDPO_MDPO_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MDPO_API __declspec(dllexport)
#else
#define MDPO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mdpo_status {
  MDPO_OK = 0,
  MDPO_ERR_INVALID_ARGUMENT = 1,
  MDPO_ERR_MALFORMED_SOLUTION = 2,
  MDPO_ERR_MALFORMED_ANSWER = 3,
  MDPO_ERR_DEGENERATE_EXPRESSION = 4,
  MDPO_ERR_EMPTY_SEQUENCE = 5,
  MDPO_ERR_SHAPE_MISMATCH = 6,
  MDPO_ERR_UNKNOWN_TOKEN = 7,
  MDPO_ERR_INSUFFICIENT_WINDOWS = 8,
  MDPO_ERR_GENERATOR = 9,
  MDPO_ERR_CACHE_MISS = 10,
  MDPO_ERR_PARSE = 11,
  MDPO_ERR_IO = 12,
  MDPO_ERR_CONFIG_MISMATCH = 13,
  MDPO_ERR_SKIPPED_BATCH = 14,
  MDPO_ERR_INTERNAL = 99
} mdpo_status;

typedef struct mdpo_corpus mdpo_corpus;
typedef struct mdpo_policy mdpo_policy;
typedef struct mdpo_pairs mdpo_pairs;

typedef enum mdpo_split {
  MDPO_SPLIT_ALL = -1,
  MDPO_SPLIT_TRAIN = 0,
  MDPO_SPLIT_PAIR_EVAL = 1,
  MDPO_SPLIT_ACCURACY_EVAL = 2
} mdpo_split;

/* Bit i selects granularity i. */
#define MDPO_GRAN_SOL2SOL 1u
#define MDPO_GRAN_INFER2INFER 2u
#define MDPO_GRAN_STEP2STEP 4u
#define MDPO_GRAN_ALL 7u

typedef enum mdpo_generator_kind {
  MDPO_GENERATOR_LOCAL = 0,
  MDPO_GENERATOR_HTTP = 1,
  MDPO_GENERATOR_REPLAY = 2
} mdpo_generator_kind;

typedef enum mdpo_loss_kind { MDPO_LOSS_MDPO = 0, MDPO_LOSS_DPO = 1 } mdpo_loss_kind;

MDPO_API const char* mdpo_last_error(void);
MDPO_API const char* mdpo_status_name(mdpo_status status);
MDPO_API void mdpo_free_string(char* s);
MDPO_API mdpo_status mdpo_file_sha256(const char* path, char** out_hex);

/* ---- corpus ---- */

MDPO_API mdpo_status mdpo_corpus_synth(uint64_t seed, int count, int min_difficulty,
                                       int max_difficulty, int operand_lo, int operand_hi,
                                       mdpo_corpus** out);
MDPO_API mdpo_status mdpo_corpus_load(const char* path, mdpo_corpus** out);
MDPO_API mdpo_status mdpo_corpus_save(const mdpo_corpus* corpus, const char* path);
MDPO_API mdpo_status mdpo_corpus_size(const mdpo_corpus* corpus, size_t* out);
MDPO_API mdpo_status mdpo_corpus_split(const mdpo_corpus* corpus, mdpo_split split,
                                       mdpo_corpus** out);
/* Operands replaced by 4-digit numbers; ids gain a "-hard" suffix. */
MDPO_API mdpo_status mdpo_corpus_complexify(const mdpo_corpus* corpus, uint64_t seed,
                                            mdpo_corpus** out);
MDPO_API void mdpo_corpus_free(mdpo_corpus* corpus);

/* ---- policy ---- */

/* Count-based warm start on the gold solutions. */
MDPO_API mdpo_status mdpo_policy_sft(const mdpo_corpus* corpus, int order, double alpha,
                                     int backoff, mdpo_policy** out);
MDPO_API mdpo_status mdpo_policy_load(const char* path, mdpo_policy** out);
MDPO_API mdpo_status mdpo_policy_save(const mdpo_policy* policy, const char* path);
MDPO_API mdpo_status mdpo_policy_digest(const mdpo_policy* policy, char** out_hex);
MDPO_API void mdpo_policy_free(mdpo_policy* policy);

/* ---- preference pairs ---- */

typedef struct mdpo_generator_config {
  mdpo_generator_kind kind;
  const char* endpoint;   /* http */
  const char* model;      /* http, may be NULL */
  const char* auth_env;   /* http, name of the token variable, may be NULL */
  const char* cache_dir;  /* replay */
  int record;             /* replay: fill misses from the http endpoint */
  int timeout_ms;
  int max_retries;
} mdpo_generator_config;

typedef struct mdpo_build_config {
  int k;
  int max_pairs_per_problem;
  unsigned granularity_mask;
  uint64_t seed;
  double temperature;
  int max_tokens;
  int target_pairs; /* 0 keeps everything */
  int complexify;
} mdpo_build_config;

MDPO_API void mdpo_generator_config_default(mdpo_generator_config* cfg);
MDPO_API void mdpo_build_config_default(mdpo_build_config* cfg);

/* policy is required for the local generator and ignored otherwise.
 * report_json may be NULL. */
MDPO_API mdpo_status mdpo_pairs_build(const mdpo_corpus* corpus, const mdpo_policy* policy,
                                      const mdpo_generator_config* generator,
                                      const mdpo_build_config* cfg, mdpo_pairs** out,
                                      char** report_json);
MDPO_API mdpo_status mdpo_pairs_load(const char* path, mdpo_pairs** out);
MDPO_API mdpo_status mdpo_pairs_save(const mdpo_pairs* pairs, const char* path);
MDPO_API mdpo_status mdpo_pairs_size(const mdpo_pairs* pairs, size_t* out);
MDPO_API mdpo_status mdpo_pairs_select(const mdpo_pairs* pairs, mdpo_split split,
                                       unsigned granularity_mask, mdpo_pairs** out);
MDPO_API void mdpo_pairs_free(mdpo_pairs* pairs);

/* ---- training ---- */

typedef struct mdpo_train_config {
  int epochs;
  int batch_size;
  double peak_lr;
  double warmup_ratio;
  mdpo_loss_kind loss;
  double beta;
  double gamma;
  uint64_t seed;
  int shuffle;
  double weight_decay;
} mdpo_train_config;

typedef struct mdpo_train_options {
  const mdpo_pairs* eval_pairs;  /* per-epoch win rate; NULL uses the training pairs */
  const char* metrics_path;      /* JSON lines, may be NULL */
  const char* checkpoint_path;   /* written after the last epoch run, may be NULL */
  const char* resume_path;       /* continue from this checkpoint, may be NULL */
  int stop_after_epoch;          /* < 0 runs every epoch */
} mdpo_train_options;

MDPO_API void mdpo_train_config_default(mdpo_train_config* cfg);
MDPO_API mdpo_status mdpo_train(const mdpo_policy* initial, const mdpo_pairs* pairs,
                                const mdpo_train_config* cfg, const mdpo_train_options* options,
                                mdpo_policy** out);

/* ---- evaluation ---- */

typedef struct mdpo_eval_config {
  int max_tokens;
  double beta;
  double gamma;
  int include_hard;
  uint64_t hard_seed;
} mdpo_eval_config;

typedef struct mdpo_method {
  const char* name;
  mdpo_train_config config;
  unsigned granularity_mask; /* 0 means all */
} mdpo_method;

MDPO_API void mdpo_eval_config_default(mdpo_eval_config* cfg);
/* problems or pairs may be NULL to skip that part. Either output may be NULL. */
MDPO_API mdpo_status mdpo_evaluate(const mdpo_policy* policy, const mdpo_corpus* problems,
                                   const mdpo_pairs* pairs, const mdpo_eval_config* cfg,
                                   char** out_json, char** out_text);
MDPO_API mdpo_status mdpo_compare(const mdpo_policy* warm_start, const mdpo_pairs* train_pairs,
                                  const mdpo_corpus* eval_problems, const mdpo_pairs* eval_pairs,
                                  const mdpo_method* methods, size_t n_methods,
                                  const mdpo_eval_config* cfg, char** out_json, char** out_text);
/* Plain-text table for a JSON report written by mdpo_evaluate or mdpo_compare. */
MDPO_API mdpo_status mdpo_report_render(const char* report_json, char** out_text);

/* ---- losses ---- */

/* grad_w / grad_l may be NULL; otherwise they hold n_w / n_l entries. */
MDPO_API mdpo_status mdpo_loss_mdpo(const double* chosen, size_t n_w, const double* rejected,
                                    size_t n_l, double beta, double gamma, double* loss,
                                    double* grad_w, double* grad_l);
MDPO_API mdpo_status mdpo_loss_dpo(const double* chosen, const double* ref_chosen, size_t n_w,
                                   const double* rejected, const double* ref_rejected, size_t n_l,
                                   double beta, double* loss, double* grad_w, double* grad_l);
MDPO_API mdpo_status mdpo_gradcheck(int trials, uint64_t seed, double h, double tolerance,
                                    int* passed, int* checks, double* max_relative_error);

#ifdef __cplusplus
}
#endif

#endif  /* MDPO_MDPO_H_ */
