#ifndef REGLGC_H
#define REGLGC_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes shared by every fallible entry point. On failure the
 * message is available from reglgc_last_error() on the same thread. */
typedef enum reglgc_status {
    REGLGC_OK = 0,
    REGLGC_ERR_VALIDATION = 1,
    REGLGC_ERR_NUMERICAL = 2,
    REGLGC_ERR_IO = 3
} reglgc_status;

typedef struct reglgc_series reglgc_series;
typedef struct reglgc_hmm reglgc_hmm;
typedef struct reglgc_report reglgc_report;

const char* reglgc_version(void);

/* Message for the most recent failure on the calling thread; never NULL. */
const char* reglgc_last_error(void);

/* Releases strings returned through char** out parameters. */
void reglgc_string_free(char* s);

/* --- series ---------------------------------------------------------- */

/* Builds a series from parallel arrays of length n. labels may be NULL;
 * when given, entries are 1-based regime ids. Non-finite values are kept
 * as missing observations. */
reglgc_status reglgc_series_from_arrays(const double* a, const double* b, const int* labels,
                                        size_t n, reglgc_series** out);

/* Loads a series from CSV. time_column and label_column may be NULL or
 * empty. as_prices != 0 converts price columns to percent log returns. */
reglgc_status reglgc_series_load_csv(const char* path, const char* time_column,
                                     const char* a_column, const char* b_column,
                                     const char* label_column, int as_prices,
                                     reglgc_series** out);

size_t reglgc_series_size(const reglgc_series* s);

void reglgc_series_free(reglgc_series* s);

/* --- regime model ------------------------------------------------------ */

reglgc_status reglgc_hmm_fit(const reglgc_series* s, int n_regimes, int restarts, uint64_t seed,
                             reglgc_hmm** out);

/* Fit summary as a JSON document; free with reglgc_string_free. */
reglgc_status reglgc_hmm_json(const reglgc_hmm* fit, char** out);

/* Writes reglgc_series_size(s) 1-based smoothed regime labels. */
reglgc_status reglgc_hmm_decode(const reglgc_hmm* fit, const reglgc_series* s, int* labels_out);

void reglgc_hmm_free(reglgc_hmm* fit);

/* --- dependence test --------------------------------------------------- */

/* Bootstrap test for equal local dependence across the labeled regimes of
 * s (the series must carry labels). */
reglgc_status reglgc_test_run(const reglgc_series* s, int n_boot, double alpha, uint64_t seed,
                              reglgc_report** out);

reglgc_status reglgc_test_json(const reglgc_report* report, char** out);

void reglgc_report_free(reglgc_report* report);

/* --- pipeline ---------------------------------------------------------- */

/* Runs a full subcommand ("analyze", "select", "study", "simulate") from a
 * key = value configuration text, writing artifacts as configured. On
 * success *summary_out receives the run summary; free it with
 * reglgc_string_free. */
reglgc_status reglgc_run(const char* subcommand, const char* config, char** summary_out);

#ifdef __cplusplus
}
#endif

#endif /* REGLGC_H */
