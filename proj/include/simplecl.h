/* simplecl — curriculum-learning workbench for masked-language-model
 * pre-training on simple/everyday language corpora.
 *
 * C interface to the shared library. All functionality is reachable through
 * an opaque experiment handle driven by a JSON configuration document; a few
 * pure helpers are exported directly. Functions return SCL_OK on success;
 * on failure scl_experiment_last_error() carries a message for handle-based
 * calls.
 */
#ifndef SIMPLECL_H
#define SIMPLECL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SCL_API __declspec(dllexport)
#else
#define SCL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum scl_status {
  SCL_OK = 0,
  SCL_ERR_INVALID_ARGUMENT = 1,
  SCL_ERR_CONFIG = 2,
  SCL_ERR_IO = 3,
  SCL_ERR_CORPUS = 4,
  SCL_ERR_STATE = 5,
  SCL_ERR_NUMERIC = 6,
  SCL_ERR_INTERNAL = 7
} scl_status;

typedef struct scl_experiment scl_experiment;

SCL_API const char* scl_version(void);
SCL_API const char* scl_status_name(scl_status status);

/* Creates an experiment from a JSON configuration document (the document
 * itself, not a path). The handle must be released with
 * scl_experiment_close(). */
SCL_API scl_status scl_experiment_open(const char* config_json, scl_experiment** out_handle);
SCL_API void scl_experiment_close(scl_experiment* handle);

/* Message describing the most recent failure on this handle; empty string
 * when the last call succeeded. The pointer stays valid until the next call
 * on the handle. */
SCL_API const char* scl_experiment_last_error(const scl_experiment* handle);

/* Pipeline stages. List arguments are comma-separated names; NULL means
 * "everything the configuration asks for".
 *   ingest  — tokenize the corpus, build the vocabulary and splits, write
 *             records.tsv / vocab.tsv / split.json / stats.json
 *   score   — difficulty scores per metric (length, word_rarity, fre, random)
 *   plan    — curriculum plans per strategy as JSON
 *   train   — one training run per (strategy, seed); completed cells are
 *             cached via manifest content keys and skipped on re-runs
 *   eval    — vocabulary-overlap and difficulty-histogram analytics plus a
 *             re-evaluation of every stored checkpoint
 *   compare — paired significance tests with Holm-Bonferroni adjustment
 *   report  — aggregated results tables (CSV and text)
 */
SCL_API scl_status scl_experiment_ingest(scl_experiment* handle);
SCL_API scl_status scl_experiment_score(scl_experiment* handle, const char* metrics);
SCL_API scl_status scl_experiment_plan(scl_experiment* handle, const char* strategies);
SCL_API scl_status scl_experiment_train(scl_experiment* handle, const char* strategies,
                                        const char* seeds);
SCL_API scl_status scl_experiment_eval(scl_experiment* handle);
SCL_API scl_status scl_experiment_compare(scl_experiment* handle);
SCL_API scl_status scl_experiment_report(scl_experiment* handle);
SCL_API scl_status scl_experiment_run_all(scl_experiment* handle);

/* JSON summary of what the stages did (cells run/skipped, counts). The
 * caller frees the string with scl_string_free(). */
SCL_API scl_status scl_experiment_summary_json(const scl_experiment* handle, char** out_json);
SCL_API void scl_string_free(char* s);

/* Pure helpers. */

/* Square-root competence schedule value at a step. */
SCL_API scl_status scl_competence_at(double step, double c0, double total_steps,
                                     int use_c0_offset, double* out_competence);

/* Flesch Reading Ease of a single sentence under the built-in tokenizer and
 * syllable heuristic. */
SCL_API scl_status scl_flesch_reading_ease(const char* sentence_utf8, double* out_score);

/* One-sided Wilcoxon signed-rank p-value for paired differences;
 * direction_improves != 0 tests "treatment < control". */
SCL_API scl_status scl_wilcoxon_one_sided(const double* differences, size_t n,
                                          int direction_improves, double* out_p);

#ifdef __cplusplus
}
#endif

#endif /* SIMPLECL_H */
