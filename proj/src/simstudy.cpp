#include "reglgc/simstudy.hpp"

#include <array>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "reglgc/csv.hpp"
#include "reglgc/errors.hpp"
#include "reglgc/hmm.hpp"
#include "reglgc/parallel.hpp"
#include "reglgc/rng.hpp"
#include "reglgc/stats.hpp"

namespace reglgc {

namespace {

void validate_levels(const std::vector<double>& levels) {
    if (levels.empty()) throw ValidationError("study: at least one level required");
    for (double a : levels)
        if (!(a > 0.0 && a < 1.0)) throw ValidationError("study: levels must lie in (0, 1)");
}

std::vector<RejectionRate> summarize_rates(const std::vector<double>& levels,
                                           const std::vector<std::vector<int>>& reject_counts,
                                           int n_effective) {
    std::vector<RejectionRate> rates;
    rates.reserve(levels.size());
    for (std::size_t li = 0; li < levels.size(); ++li) {
        RejectionRate r;
        r.alpha = levels[li];
        r.n = n_effective;
        for (int v : reject_counts[li]) r.rejections += v;
        r.rate = n_effective > 0 ? static_cast<double>(r.rejections) / n_effective : 0.0;
        if (n_effective > 0) {
            const auto ci = stats::binom_ci(r.rejections, n_effective, 0.95);
            r.ci_lo = ci.first;
            r.ci_hi = ci.second;
        }
        rates.push_back(r);
    }
    return rates;
}

void check_failures(int failed, int requested, double max_fraction, const char* what) {
    if (failed > max_fraction * requested)
        throw NumericalError(std::string(what) + ": " + std::to_string(failed) + " of " +
                             std::to_string(requested) +
                             " datasets failed, more than the tolerated fraction");
}

}  // namespace

TwoRegimeStudyResult run_two_regime_study(const TwoRegimeDesign& design) {
    design.regime1.validate();
    design.regime2.validate();
    validate_levels(design.levels);
    if (design.n_datasets < 1) throw ValidationError("study: n_datasets must be positive");
    if (design.size1 < 20 || design.size2 < 20)
        throw ValidationError("study: regime sizes below the minimum of 20");

    const auto m = static_cast<std::size_t>(design.n_datasets);
    const std::size_t n_levels = design.levels.size();
    // Slot per dataset: -1 failed, otherwise bitmask-free per-level flags.
    std::vector<std::vector<int>> rejected(n_levels, std::vector<int>(m, 0));
    std::vector<int> usable(m, 0);

    parallel_for(
        m,
        [&](std::size_t i) {
            Rng seeder = Rng::stream(design.seed, i);
            const std::uint64_t data_seed = seeder.next_u64();
            const std::uint64_t test_seed = seeder.next_u64();

            const std::size_t n = design.size1 + design.size2;
            std::vector<double> a(n), b(n);
            Rng rng(data_seed);
            sample_into(design.regime1, design.size1, rng, a.data(), b.data());
            sample_into(design.regime2, design.size2, rng, a.data() + design.size1,
                        b.data() + design.size1);
            ReturnSeries series = ReturnSeries::from_values(std::move(a), std::move(b));
            series.labels.assign(n, 1);
            for (std::size_t t = design.size1; t < n; ++t) series.labels[t] = 2;

            TestConfig cfg;
            cfg.n_boot = design.n_boot;
            cfg.alpha = design.levels.front();
            cfg.correction = Correction::none;  // single pair
            cfg.grid = design.grid;
            cfg.bandwidth = design.bandwidth;
            cfg.seed = test_seed;
            cfg.threads = 1;
            try {
                const TestReport rep = run_regime_test(series, cfg);
                const double p = rep.pairs.front().p_raw;
                usable[i] = 1;
                for (std::size_t li = 0; li < n_levels; ++li)
                    rejected[li][i] = p < design.levels[li] ? 1 : 0;
            } catch (const NumericalError&) {
                // Degenerate dataset; tracked through the usable flags.
            }
        },
        design.threads);

    TwoRegimeStudyResult result;
    result.n_datasets = design.n_datasets;
    for (int v : usable) result.n_effective += v;
    result.failed = design.n_datasets - result.n_effective;
    check_failures(result.failed, design.n_datasets, design.max_fail_fraction, "study");
    result.rates = summarize_rates(design.levels, rejected, result.n_effective);
    return result;
}

MisclassificationResult run_misclassification_study(const MisclassificationDesign& design) {
    design.regime1.validate();
    design.regime2.validate();
    validate_levels(design.levels);
    if (design.n_datasets < 1) throw ValidationError("study: n_datasets must be positive");
    if (design.n_obs < 50) throw ValidationError("study: n_obs below the minimum of 50");
    for (int i = 0; i < 2; ++i) {
        double row = 0.0;
        for (int j = 0; j < 2; ++j) {
            if (!(design.tpm(i, j) >= 0.0))
                throw ValidationError("study: latent chain has negative probabilities");
            row += design.tpm(i, j);
        }
        if (std::fabs(row - 1.0) > 1e-8)
            throw ValidationError("study: latent chain rows must sum to 1");
    }

    Eigen::MatrixXd tpm(2, 2);
    tpm << design.tpm(0, 0), design.tpm(0, 1), design.tpm(1, 0), design.tpm(1, 1);
    const Eigen::VectorXd stationary = stationary_distribution(tpm);

    const auto m = static_cast<std::size_t>(design.n_datasets);
    const std::size_t n_levels = design.levels.size();
    std::vector<std::vector<int>> rej_true(n_levels, std::vector<int>(m, 0));
    std::vector<std::vector<int>> rej_pred(n_levels, std::vector<int>(m, 0));
    std::vector<int> usable(m, 0);
    // Per-dataset confusion counts, reduced after the parallel section.
    std::vector<std::array<long long, 4>> confusion_slots(m, {0, 0, 0, 0});

    parallel_for(
        m,
        [&](std::size_t i) {
            Rng seeder = Rng::stream(design.seed, i);
            const std::uint64_t data_seed = seeder.next_u64();
            const std::uint64_t hmm_seed = seeder.next_u64();
            const std::uint64_t test_seed_true = seeder.next_u64();
            const std::uint64_t test_seed_pred = seeder.next_u64();

            // Latent path, then observations drawn from the active regime.
            Rng rng(data_seed);
            const std::size_t n = design.n_obs;
            std::vector<int> states(n);
            {
                double u = rng.uniform();
                states[0] = u < stationary[0] ? 1 : 2;
                for (std::size_t t = 1; t < n; ++t) {
                    const double stay = tpm(states[t - 1] - 1, states[t - 1] - 1);
                    states[t] = rng.uniform() < stay ? states[t - 1] : 3 - states[t - 1];
                }
            }
            std::vector<double> a(n), b(n);
            for (std::size_t t = 0; t < n; ++t) {
                const CopulaSpec& spec = states[t] == 1 ? design.regime1 : design.regime2;
                sample_into(spec, 1, rng, &a[t], &b[t]);
            }
            ReturnSeries series = ReturnSeries::from_values(std::move(a), std::move(b));

            TestConfig cfg;
            cfg.n_boot = design.n_boot;
            cfg.alpha = design.levels.front();
            cfg.correction = Correction::none;
            cfg.grid = design.grid;
            cfg.bandwidth = design.bandwidth;
            cfg.threads = 1;

            try {
                // True labels.
                series.labels = states;
                cfg.seed = test_seed_true;
                const TestReport rep_true = run_regime_test(series, cfg);
                const double p_true = rep_true.pairs.front().p_raw;

                // Predicted labels from a fresh two-state fit. States come
                // back sorted by covariance trace, so state 1 is the
                // low-variance regime, matching the design convention.
                ReturnSeries unlabeled = series;
                unlabeled.labels.clear();
                HmmOptions hopts;
                hopts.restarts = design.hmm_restarts;
                hopts.seed = hmm_seed;
                hopts.threads = 1;
                const HmmFit fit = fit_hmm(unlabeled, 2, hopts);
                const HmmSmoothing sm = hmm_smooth(fit.model, unlabeled);

                series.labels = sm.labels;
                cfg.seed = test_seed_pred;
                const TestReport rep_pred = run_regime_test(series, cfg);
                const double p_pred = rep_pred.pairs.front().p_raw;

                for (std::size_t t = 0; t < n; ++t) {
                    const int ti = states[t] - 1;
                    const int pi = sm.labels[t] - 1;
                    ++confusion_slots[i][static_cast<std::size_t>(2 * ti + pi)];
                }
                usable[i] = 1;
                for (std::size_t li = 0; li < n_levels; ++li) {
                    rej_true[li][i] = p_true < design.levels[li] ? 1 : 0;
                    rej_pred[li][i] = p_pred < design.levels[li] ? 1 : 0;
                }
            } catch (const Error&) {
                // HMM fit failure, a regime starved of observations, or a
                // degenerate bootstrap; the dataset is skipped.
            }
        },
        design.threads);

    MisclassificationResult result;
    result.n_datasets = design.n_datasets;
    for (int v : usable) result.n_effective += v;
    result.failed = design.n_datasets - result.n_effective;
    check_failures(result.failed, design.n_datasets, design.max_fail_fraction,
                   "misclassification study");

    long long counts[4] = {0, 0, 0, 0};
    for (std::size_t i = 0; i < m; ++i)
        if (usable[i] != 0)
            for (int j = 0; j < 4; ++j) counts[j] += confusion_slots[i][static_cast<std::size_t>(j)];
    const double total = static_cast<double>(counts[0] + counts[1] + counts[2] + counts[3]);
    if (!(total > 0.0)) throw NumericalError("misclassification study: no effective datasets");
    result.confusion << counts[0] / total, counts[1] / total, counts[2] / total, counts[3] / total;
    result.accuracy = (counts[0] + counts[3]) / total;
    result.true_label_rates = summarize_rates(design.levels, rej_true, result.n_effective);
    result.predicted_label_rates = summarize_rates(design.levels, rej_pred, result.n_effective);
    return result;
}

namespace {

nlohmann::json rates_json(const std::vector<RejectionRate>& rates) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rates)
        arr.push_back({{"alpha", r.alpha},
                       {"rejections", r.rejections},
                       {"n", r.n},
                       {"rate", r.rate},
                       {"ci_lo", r.ci_lo},
                       {"ci_hi", r.ci_hi}});
    return arr;
}

nlohmann::json spec_json(const CopulaSpec& s) {
    return {{"family", to_string(s.family)}, {"param", s.param},
            {"mean_a", s.mean_a},            {"mean_b", s.mean_b},
            {"sd_a", s.sd_a},                {"sd_b", s.sd_b}};
}

}  // namespace

std::string two_regime_result_to_json(const TwoRegimeStudyResult& result,
                                      const TwoRegimeDesign& design, const std::string& kind) {
    nlohmann::json j{{"kind", kind},
                     {"regime1", spec_json(design.regime1)},
                     {"regime2", spec_json(design.regime2)},
                     {"size1", design.size1},
                     {"size2", design.size2},
                     {"n_datasets", result.n_datasets},
                     {"n_effective", result.n_effective},
                     {"failed", result.failed},
                     {"n_boot", design.n_boot},
                     {"seed", design.seed},
                     {"rates", rates_json(result.rates)}};
    return j.dump(2) + "\n";
}

std::string misclassification_result_to_json(const MisclassificationResult& result,
                                             const MisclassificationDesign& design) {
    nlohmann::json j{{"kind", "misclassification"},
                     {"regime1", spec_json(design.regime1)},
                     {"regime2", spec_json(design.regime2)},
                     {"n_obs", design.n_obs},
                     {"tpm", {{design.tpm(0, 0), design.tpm(0, 1)},
                              {design.tpm(1, 0), design.tpm(1, 1)}}},
                     {"n_datasets", result.n_datasets},
                     {"n_effective", result.n_effective},
                     {"failed", result.failed},
                     {"n_boot", design.n_boot},
                     {"seed", design.seed},
                     {"accuracy", result.accuracy},
                     {"confusion", {{result.confusion(0, 0), result.confusion(0, 1)},
                                    {result.confusion(1, 0), result.confusion(1, 1)}}},
                     {"true_label_rates", rates_json(result.true_label_rates)},
                     {"predicted_label_rates", rates_json(result.predicted_label_rates)}};
    return j.dump(2) + "\n";
}

std::string rates_to_csv(const std::vector<RejectionRate>& rates, const std::string& label) {
    std::ostringstream out;
    out << "label,alpha,rejections,n,rate,ci_lo,ci_hi\n";
    for (const auto& r : rates) {
        out << csv_escape(label) << ',' << format_double(r.alpha) << ',' << r.rejections << ','
            << r.n << ',' << format_double(r.rate) << ',' << format_double(r.ci_lo) << ','
            << format_double(r.ci_hi) << '\n';
    }
    return out.str();
}

}  // namespace reglgc
