#include "reglgc.h"

#include <cstring>
#include <new>
#include <string>

#include "reglgc/errors.hpp"
#include "reglgc/hmm.hpp"
#include "reglgc/pipeline.hpp"
#include "reglgc/regimetest.hpp"
#include "reglgc/series.hpp"

struct reglgc_series {
    reglgc::ReturnSeries data;
};

struct reglgc_hmm {
    reglgc::HmmFit fit;
};

struct reglgc_report {
    reglgc::TestReport report;
};

namespace {

thread_local std::string g_last_error;

reglgc_status fail(const std::exception& e, reglgc_status code) {
    g_last_error = e.what();
    return code;
}

// Runs the body, translating exceptions to status codes.
template <typename Fn>
reglgc_status guarded(Fn&& body) {
    try {
        body();
        g_last_error.clear();
        return REGLGC_OK;
    } catch (const reglgc::ValidationError& e) {
        return fail(e, REGLGC_ERR_VALIDATION);
    } catch (const reglgc::IoError& e) {
        return fail(e, REGLGC_ERR_IO);
    } catch (const reglgc::NumericalError& e) {
        return fail(e, REGLGC_ERR_NUMERICAL);
    } catch (const std::bad_alloc& e) {
        return fail(e, REGLGC_ERR_NUMERICAL);
    } catch (const std::exception& e) {
        return fail(e, REGLGC_ERR_NUMERICAL);
    }
}

char* copy_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

}  // namespace

extern "C" {

const char* reglgc_version(void) {
    return "0.1.0";
}

const char* reglgc_last_error(void) {
    return g_last_error.c_str();
}

void reglgc_string_free(char* s) {
    delete[] s;
}

reglgc_status reglgc_series_from_arrays(const double* a, const double* b, const int* labels,
                                        size_t n, reglgc_series** out) {
    return guarded([&] {
        if (a == nullptr || b == nullptr || out == nullptr)
            throw reglgc::ValidationError("series_from_arrays: null argument");
        reglgc::ReturnSeries s =
            reglgc::ReturnSeries::from_values({a, a + n}, {b, b + n});
        if (labels != nullptr) s.labels.assign(labels, labels + n);
        s.validate();
        *out = new reglgc_series{std::move(s)};
    });
}

reglgc_status reglgc_series_load_csv(const char* path, const char* time_column,
                                     const char* a_column, const char* b_column,
                                     const char* label_column, int as_prices,
                                     reglgc_series** out) {
    return guarded([&] {
        if (path == nullptr || a_column == nullptr || b_column == nullptr || out == nullptr)
            throw reglgc::ValidationError("series_load_csv: null argument");
        reglgc::CsvColumns cols;
        cols.time = time_column != nullptr ? time_column : "";
        cols.a = a_column;
        cols.b = b_column;
        cols.label = label_column != nullptr ? label_column : "";
        const auto mode = as_prices != 0 ? reglgc::LoadMode::prices : reglgc::LoadMode::returns;
        *out = new reglgc_series{reglgc::load_series_csv(path, cols, mode)};
    });
}

size_t reglgc_series_size(const reglgc_series* s) {
    return s == nullptr ? 0 : s->data.size();
}

void reglgc_series_free(reglgc_series* s) {
    delete s;
}

reglgc_status reglgc_hmm_fit(const reglgc_series* s, int n_regimes, int restarts, uint64_t seed,
                             reglgc_hmm** out) {
    return guarded([&] {
        if (s == nullptr || out == nullptr)
            throw reglgc::ValidationError("hmm_fit: null argument");
        reglgc::HmmOptions opts;
        if (restarts >= 0) opts.restarts = restarts;
        opts.seed = seed;
        *out = new reglgc_hmm{reglgc::fit_hmm(s->data, n_regimes, opts)};
    });
}

reglgc_status reglgc_hmm_json(const reglgc_hmm* fit, char** out) {
    return guarded([&] {
        if (fit == nullptr || out == nullptr)
            throw reglgc::ValidationError("hmm_json: null argument");
        *out = copy_string(reglgc::hmm_to_json(fit->fit));
    });
}

reglgc_status reglgc_hmm_decode(const reglgc_hmm* fit, const reglgc_series* s, int* labels_out) {
    return guarded([&] {
        if (fit == nullptr || s == nullptr || labels_out == nullptr)
            throw reglgc::ValidationError("hmm_decode: null argument");
        const reglgc::HmmSmoothing sm = reglgc::hmm_smooth(fit->fit.model, s->data);
        for (std::size_t t = 0; t < sm.labels.size(); ++t) labels_out[t] = sm.labels[t];
    });
}

void reglgc_hmm_free(reglgc_hmm* fit) {
    delete fit;
}

reglgc_status reglgc_test_run(const reglgc_series* s, int n_boot, double alpha, uint64_t seed,
                              reglgc_report** out) {
    return guarded([&] {
        if (s == nullptr || out == nullptr)
            throw reglgc::ValidationError("test_run: null argument");
        reglgc::TestConfig cfg;
        if (n_boot > 0) cfg.n_boot = n_boot;
        if (alpha > 0.0) cfg.alpha = alpha;
        cfg.seed = seed;
        *out = new reglgc_report{reglgc::run_regime_test(s->data, cfg)};
    });
}

reglgc_status reglgc_test_json(const reglgc_report* report, char** out) {
    return guarded([&] {
        if (report == nullptr || out == nullptr)
            throw reglgc::ValidationError("test_json: null argument");
        *out = copy_string(reglgc::test_report_to_json(report->report));
    });
}

void reglgc_report_free(reglgc_report* report) {
    delete report;
}

reglgc_status reglgc_run(const char* subcommand, const char* config, char** summary_out) {
    if (subcommand == nullptr || config == nullptr) {
        g_last_error = "run: null argument";
        return REGLGC_ERR_VALIDATION;
    }
    std::string summary, error;
    const int code = reglgc::run_subcommand(subcommand, config, &summary, &error);
    if (code == 0) {
        g_last_error.clear();
        if (summary_out != nullptr) *summary_out = copy_string(summary);
        return REGLGC_OK;
    }
    g_last_error = error;
    return static_cast<reglgc_status>(code);
}

}  // extern "C"
