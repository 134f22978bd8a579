#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "reglgc/errors.hpp"
#include "reglgc/hmm.hpp"
#include "reglgc/rng.hpp"
#include "reglgc/stats.hpp"

using namespace reglgc;

namespace {

// Brute-force likelihood: sum the complete-data density over every state
// path. Exponential in T, usable only for tiny cases; that is the point,
// it shares nothing with the forward recursion.
double enumeration_loglik(const HmmModel& model, const ReturnSeries& data) {
    const int c = model.n_regimes;
    const std::size_t t_len = data.size();
    std::vector<std::vector<double>> dens(t_len, std::vector<double>(static_cast<std::size_t>(c)));
    for (std::size_t t = 0; t < t_len; ++t) {
        for (int k = 0; k < c; ++k) {
            if (data.is_missing(t)) {
                dens[t][static_cast<std::size_t>(k)] = 1.0;
                continue;
            }
            const auto ku = static_cast<std::size_t>(k);
            const Eigen::Vector2d d(data.a[t] - model.means[ku](0),
                                    data.b[t] - model.means[ku](1));
            const Eigen::Matrix2d& s = model.covariances[ku];
            const double det = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
            const double q =
                (s(1, 1) * d(0) * d(0) - 2.0 * s(0, 1) * d(0) * d(1) + s(0, 0) * d(1) * d(1)) /
                det;
            dens[t][ku] = std::exp(-0.5 * q) / (2.0 * stats::pi * std::sqrt(det));
        }
    }
    double total = 0.0;
    std::vector<int> path(t_len, 0);
    while (true) {
        double p = model.initial(path[0]) * dens[0][static_cast<std::size_t>(path[0])];
        for (std::size_t t = 1; t < t_len; ++t)
            p *= model.tpm(path[t - 1], path[t]) * dens[t][static_cast<std::size_t>(path[t])];
        total += p;
        std::size_t pos = 0;
        while (pos < t_len && ++path[pos] == c) path[pos++] = 0;
        if (pos == t_len) break;
    }
    return std::log(total);
}

HmmModel reference_model() {
    HmmModel m;
    m.n_regimes = 2;
    m.means = {Eigen::Vector2d(0.1, 0.0), Eigen::Vector2d(-0.3, 0.2)};
    Eigen::Matrix2d s1, s2;
    s1 << 1.0, 0.3, 0.3, 0.8;
    s2 << 2.0, -0.5, -0.5, 1.5;
    m.covariances = {s1, s2};
    m.tpm.resize(2, 2);
    m.tpm << 0.9, 0.1, 0.2, 0.8;
    m.initial.resize(2);
    m.initial << 0.6, 0.4;
    return m;
}

ReturnSeries reference_data() {
    ReturnSeries s;
    s.a = {0.5, -0.4, 1.0, 0.0, -1.2};
    s.b = {0.2, 0.1, -0.3, 0.0, 0.8};
    return s;
}

HmmModel random_model(int c, Rng& rng) {
    HmmModel m;
    m.n_regimes = c;
    for (int k = 0; k < c; ++k) {
        m.means.emplace_back(2.0 * rng.normal(), 2.0 * rng.normal());
        const double s1 = 0.3 + rng.uniform() * 2.0;
        const double s2 = 0.3 + rng.uniform() * 2.0;
        const double r = -0.8 + 1.6 * rng.uniform();
        Eigen::Matrix2d cov;
        cov << s1 * s1, r * s1 * s2, r * s1 * s2, s2 * s2;
        m.covariances.push_back(cov);
    }
    m.tpm.resize(c, c);
    for (int i = 0; i < c; ++i) {
        double row_sum = 0.0;
        for (int j = 0; j < c; ++j) {
            m.tpm(i, j) = 0.05 + rng.uniform();
            row_sum += m.tpm(i, j);
        }
        for (int j = 0; j < c; ++j) m.tpm(i, j) /= row_sum;
    }
    m.initial.resize(c);
    double init_sum = 0.0;
    for (int i = 0; i < c; ++i) {
        m.initial(i) = 0.1 + rng.uniform();
        init_sum += m.initial(i);
    }
    m.initial /= init_sum;
    return m;
}

ReturnSeries draw_series(std::size_t t_len, Rng& rng, double missing_prob = 0.0) {
    ReturnSeries s;
    for (std::size_t t = 0; t < t_len; ++t) {
        s.a.push_back(2.5 * rng.normal());
        s.b.push_back(2.5 * rng.normal());
    }
    if (missing_prob > 0.0) {
        s.missing.assign(t_len, 0);
        for (std::size_t t = 0; t < t_len; ++t)
            if (rng.uniform() < missing_prob) {
                s.missing[t] = 1;
                s.a[t] = 0.0;
                s.b[t] = 0.0;
            }
    }
    return s;
}

}  // namespace

TEST_CASE("forward likelihood matches an external reference") {
    CHECK(hmm_loglik(reference_model(), reference_data()) ==
          doctest::Approx(-11.3837880388192).epsilon(1e-12));
}

TEST_CASE("missing rows contribute unit density") {
    ReturnSeries s = reference_data();
    s.missing.assign(s.size(), 0);
    s.missing[2] = 1;
    CHECK(hmm_loglik(reference_model(), s) == doctest::Approx(-8.99717938044957).epsilon(1e-12));
    // All rows missing: the likelihood collapses to sum over paths of chain
    // probabilities, which is exactly 1.
    s.missing.assign(s.size(), 1);
    CHECK(hmm_loglik(reference_model(), s) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("forward equals enumeration on random small problems") {
    Rng rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const int c = 2 + static_cast<int>(rng.below(2));  // 2 or 3 states
        const auto t_len = static_cast<std::size_t>(3 + rng.below(5));  // 3..7
        const HmmModel m = random_model(c, rng);
        const ReturnSeries data = draw_series(t_len, rng, trial % 3 == 0 ? 0.3 : 0.0);
        const double fwd = hmm_loglik(m, data);
        const double ref = enumeration_loglik(m, data);
        CHECK(fwd == doctest::Approx(ref).epsilon(1e-11));
    }
}

TEST_CASE("forward equals backward on longer series") {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        const int c = 2 + static_cast<int>(rng.below(3));
        const HmmModel m = random_model(c, rng);
        const ReturnSeries data = draw_series(150, rng, trial % 2 == 0 ? 0.1 : 0.0);
        const double fwd = hmm_loglik(m, data);
        const double bwd = hmm_loglik_backward(m, data);
        CHECK(fwd == doctest::Approx(bwd).epsilon(1e-10));
    }
}

TEST_CASE("smoothing matches the unscaled forward-backward reference") {
    const HmmSmoothing sm = hmm_smooth(reference_model(), reference_data());
    REQUIRE(sm.prob.rows() == 5);
    REQUIRE(sm.prob.cols() == 2);
    CHECK(sm.prob(0, 0) == doctest::Approx(0.8499374645388).epsilon(1e-10));
    CHECK(sm.prob(0, 1) == doctest::Approx(0.1500625354612).epsilon(1e-10));
    CHECK(sm.prob(4, 0) == doctest::Approx(0.646556946128321).epsilon(1e-10));
    CHECK(sm.prob(4, 1) == doctest::Approx(0.353443053871679).epsilon(1e-10));
    for (int t = 0; t < 5; ++t) {
        CHECK(sm.prob.row(t).sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(sm.labels[static_cast<std::size_t>(t)] == 1);
    }
}

TEST_CASE("stationary distribution solves pi G = pi") {
    const HmmModel m = reference_model();
    const Eigen::VectorXd pi = stationary_distribution(m.tpm);
    CHECK(pi(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(pi(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const HmmModel rm = random_model(2 + static_cast<int>(rng.below(3)), rng);
        const Eigen::VectorXd p = stationary_distribution(rm.tpm);
        CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
        const Eigen::VectorXd back = rm.tpm.transpose() * p;
        for (Eigen::Index i = 0; i < p.size(); ++i)
            CHECK(back(i) == doctest::Approx(p(i)).epsilon(1e-10));
    }
}

TEST_CASE("working parameter pack and unpack round-trip") {
    Rng rng(31);
    for (int trial = 0; trial < 25; ++trial) {
        const int c = 2 + static_cast<int>(rng.below(3));
        for (bool with_initial : {false, true}) {
            HmmModel m = random_model(c, rng);
            if (!with_initial) m.initial = stationary_distribution(m.tpm);
            const Eigen::VectorXd w = hmm_param::pack(m, with_initial);
            CHECK(w.size() == hmm_param::count(c, with_initial));
            const HmmModel back = hmm_param::unpack(w, c, with_initial);
            for (int k = 0; k < c; ++k) {
                const auto ku = static_cast<std::size_t>(k);
                CHECK((back.means[ku] - m.means[ku]).norm() ==
                      doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
                CHECK((back.covariances[ku] - m.covariances[ku]).norm() ==
                      doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
            }
            CHECK((back.tpm - m.tpm).norm() == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
            CHECK((back.initial - m.initial).norm() ==
                  doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
        }
    }
}

TEST_CASE("parameter count follows the free-parameter formula") {
    CHECK(hmm_param::count(1, false) == 5);
    CHECK(hmm_param::count(2, false) == 12);
    CHECK(hmm_param::count(3, false) == 21);
    CHECK(hmm_param::count(2, true) == 13);
}

TEST_CASE("simulation then fit recovers a well-separated model") {
    HmmModel truth;
    truth.n_regimes = 2;
    truth.means = {Eigen::Vector2d(0.073, 0.051), Eigen::Vector2d(-0.117, -0.112)};
    Eigen::Matrix2d s1, s2;
    s1 << 0.486, 0.230, 0.230, 0.523;
    s2 << 4.120, 1.965, 1.965, 3.422;
    truth.covariances = {s1, s2};
    truth.tpm.resize(2, 2);
    truth.tpm << 0.978, 0.022, 0.071, 0.929;
    truth.initial = stationary_distribution(truth.tpm);

    const ReturnSeries data = simulate_hmm(truth, 4000, 515);
    REQUIRE(data.size() == 4000);
    // Labels are populated with 1-based states.
    for (std::size_t t = 0; t < 50; ++t) {
        REQUIRE(data.labels[t] >= 1);
        REQUIRE(data.labels[t] <= 2);
    }

    HmmOptions opts;
    opts.seed = 99;
    const HmmFit fit = fit_hmm(data, 2, opts);
    CHECK(fit.converged);
    CHECK(fit.n_params == 12);
    // States are sorted by covariance trace: state 1 is the calm one.
    CHECK(fit.model.covariances[0].trace() < fit.model.covariances[1].trace());
    CHECK(fit.model.means[0](0) == doctest::Approx(truth.means[0](0)).scale(1.0).epsilon(0.08));
    CHECK(fit.model.means[1](0) == doctest::Approx(truth.means[1](0)).scale(1.0).epsilon(0.25));
    CHECK(fit.model.covariances[0](0, 0) ==
          doctest::Approx(s1(0, 0)).epsilon(0.15));
    CHECK(fit.model.covariances[1](0, 0) ==
          doctest::Approx(s2(0, 0)).epsilon(0.15));
    CHECK(fit.model.tpm(0, 0) == doctest::Approx(0.978).scale(1.0).epsilon(0.02));
    CHECK(fit.model.tpm(1, 1) == doctest::Approx(0.929).scale(1.0).epsilon(0.04));

    // Decoded labels should agree with the simulated ones almost always.
    const HmmSmoothing sm = hmm_smooth(fit.model, data);
    std::size_t agree = 0;
    for (std::size_t t = 0; t < data.size(); ++t)
        agree += sm.labels[t] == data.labels[t] ? 1 : 0;
    CHECK(static_cast<double>(agree) / static_cast<double>(data.size()) > 0.9);
}

TEST_CASE("information criteria use the observed count") {
    const ReturnSeries data = simulate_hmm(reference_model(), 400, 21);
    HmmOptions opts;
    opts.restarts = 2;
    const HmmFit fit = fit_hmm(data, 2, opts);
    CHECK(fit.aic == doctest::Approx(-2.0 * fit.loglik + 2.0 * fit.n_params).epsilon(1e-10));
    CHECK(fit.bic ==
          doctest::Approx(-2.0 * fit.loglik + fit.n_params * std::log(400.0)).epsilon(1e-10));
}

TEST_CASE("single-state fit matches the closed-form mle") {
    Rng rng(5);
    ReturnSeries data = draw_series(500, rng);
    const HmmFit fit = fit_hmm(data, 1, HmmOptions{});
    CHECK(fit.model.means[0](0) == doctest::Approx(stats::mean(data.a)).epsilon(1e-9));
    CHECK(fit.model.means[0](1) == doctest::Approx(stats::mean(data.b)).epsilon(1e-9));
    // Biased (1/T) covariance is the mle.
    const double n = 500.0;
    CHECK(fit.model.covariances[0](0, 0) ==
          doctest::Approx(stats::variance(data.a) * (n - 1.0) / n).epsilon(1e-8));
    CHECK(fit.n_params == 5);
}

TEST_CASE("fit is reproducible under a fixed seed") {
    const ReturnSeries data = simulate_hmm(reference_model(), 300, 8);
    HmmOptions opts;
    opts.seed = 4;
    opts.restarts = 3;
    const HmmFit f1 = fit_hmm(data, 2, opts);
    const HmmFit f2 = fit_hmm(data, 2, opts);
    CHECK(f1.loglik == f2.loglik);
    CHECK(f1.model.means[0](0) == f2.model.means[0](0));
    CHECK(f1.model.tpm(0, 1) == f2.model.tpm(0, 1));
}

TEST_CASE("model validation rejects malformed inputs") {
    HmmModel m = reference_model();
    m.tpm(0, 0) = 0.5;  // row no longer sums to 1
    CHECK_THROWS_AS(m.validate(), ValidationError);
    m = reference_model();
    m.covariances[0](0, 1) = 5.0;  // not positive definite
    CHECK_THROWS_AS(m.validate(), ValidationError);
    const ReturnSeries data = reference_data();
    CHECK_THROWS_AS(fit_hmm(data, 0, HmmOptions{}), ValidationError);
}
