#ifndef LMS_H
#define LMS_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as process exit codes. */
typedef enum {
  LMS_OK = 0,
  LMS_ERR_USAGE = 1,
  LMS_ERR_DATA = 2,
  LMS_ERR_VERIFY = 3,
  LMS_ERR_INTERNAL = 4
} lms_status;

const char* lms_version(void);

/* Message for the most recent failing call on this thread. Never NULL; empty
 * after a success. Owned by the library. */
const char* lms_last_error(void);

/* Frees any char* this library handed out. NULL is fine. */
void lms_free(char* s);

/* Receives one JSON record per call while a command streams output. */
typedef void (*lms_line_fn)(const char* line, void* user);

/* Accumulates settings: defaults, then file entries, then overrides, in the
 * order the calls are made. Validation happens when a command runs, so every
 * problem is reported at once. */
typedef struct lms_config lms_config;

lms_config* lms_config_new(void);
void lms_config_free(lms_config* cfg);
lms_status lms_config_load_file(lms_config* cfg, const char* path);
/* A single "key=value" override. */
lms_status lms_config_set(lms_config* cfg, const char* key_equals_value);
/* Canonical one-line JSON of the resolved configuration; also validates.
 * *echo_out must be released with lms_free. */
lms_status lms_config_echo(lms_config* cfg, char** echo_out);

/* Commands. Each validates the configuration, streams records through `emit`
 * (which may be NULL), and on success stores a malloc'd one-line JSON summary
 * into *summary_out when that is non-NULL (release with lms_free). On failure
 * the return names the error kind and lms_last_error() carries the message. */
lms_status lms_gen_data(lms_config* cfg, lms_line_fn emit, void* user, char** summary_out);
lms_status lms_train(lms_config* cfg, lms_line_fn emit, void* user, char** summary_out);
lms_status lms_eval(lms_config* cfg, lms_line_fn emit, void* user, char** summary_out);
lms_status lms_probe(lms_config* cfg, lms_line_fn emit, void* user, char** summary_out);

/* kinds and dims are comma-separated lists ("tree_rnn,rntn", "4,9,16");
 * NULL or empty selects the default set: every composer at d in {4, 9, 16}.
 * sabotage is a self-test hook: a non-empty substring picks gradient-check
 * rows whose analytic gradients get deliberately corrupted, which must make
 * the command fail. Pass NULL or "" for an honest run. */
lms_status lms_gradcheck(const char* kinds, const char* dims, uint64_t seed, double tolerance,
                         const char* sabotage, lms_line_fn emit, void* user, char** summary_out);

typedef struct {
  const char* kind; /* composer token, e.g. "lms_base" */
  int64_t d;
  int64_t d_emb;
  int64_t vocab;
  int cms_per_word; /* nonzero: per-word matrices for the cms composer */
  int64_t mlp_hidden;
  int64_t n_classes;
  int pair_head; /* nonzero: sentence-pair feature head (4d wide), else d */
} lms_paramcount_args;

lms_status lms_paramcount(const lms_paramcount_args* args, lms_line_fn emit, void* user,
                          char** summary_out);

/* Default dims for bench are {16, 64}. */
lms_status lms_bench(const char* kinds, const char* dims, int reps, int compositions, uint64_t seed,
                     lms_line_fn emit, void* user, char** summary_out);

#ifdef __cplusplus
}
#endif

#endif
