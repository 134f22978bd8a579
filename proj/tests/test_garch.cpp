#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "reglgc/errors.hpp"
#include "reglgc/garch.hpp"
#include "reglgc/stats.hpp"

using namespace reglgc;

namespace {

const std::vector<double> kTiny = {0.3, -0.5, 0.8, 1.2, -0.1, 0.05, -0.9, 0.4, 1.1, -0.6};

GarchParams tiny_params() {
    GarchParams p;
    p.mu = 0.1;
    p.omega = 0.05;
    p.alpha = 0.1;
    p.beta = 0.8;
    p.shape = 6.0;
    return p;
}

}  // namespace

TEST_CASE("log-likelihood matches an independent implementation") {
    // Reference value computed externally for this exact series and
    // parameter set (presample variance = n-1 sample variance).
    CHECK(garch_loglik(kTiny, tiny_params()) ==
          doctest::Approx(-11.3078748026038).epsilon(1e-12));
}

TEST_CASE("sigma path follows the recursion by hand") {
    const GarchParams p = tiny_params();
    const std::vector<double> sig = garch_sigma_path(kTiny, p);
    REQUIRE(sig.size() == kTiny.size());
    double s2 = stats::variance(kTiny);
    double aprev2 = 0.0;
    for (std::size_t t = 0; t < kTiny.size(); ++t) {
        s2 = p.omega + p.alpha * aprev2 + p.beta * s2;
        CHECK(sig[t] == doctest::Approx(std::sqrt(s2)).epsilon(1e-12));
        const double a = kTiny[t] - p.mu;
        aprev2 = a * a;
    }
}

TEST_CASE("residuals are centered observations over sigma") {
    const GarchParams p = tiny_params();
    const std::vector<double> sig = garch_sigma_path(kTiny, p);
    const std::vector<double> res = garch_residuals(kTiny, p);
    REQUIRE(res.size() == kTiny.size());
    for (std::size_t t = 0; t < res.size(); ++t)
        CHECK(res[t] == doctest::Approx((kTiny[t] - p.mu) / sig[t]).epsilon(1e-12));
}

TEST_CASE("simulated path has unit-variance innovations after standardizing") {
    GarchParams truth;
    truth.mu = 0.05;
    truth.omega = 0.02;
    truth.alpha = 0.08;
    truth.beta = 0.88;
    truth.shape = 7.0;
    const std::vector<double> x = simulate_garch(truth, 20000, 99);
    REQUIRE(x.size() == 20000);
    const std::vector<double> z = garch_residuals(x, truth);
    CHECK(stats::mean(z) == doctest::Approx(0.0).scale(1.0).epsilon(0.02));
    CHECK(stats::variance(z) == doctest::Approx(1.0).epsilon(0.03));
    // Marginal variance of x should match the stationary value.
    const double stat_var = truth.omega / (1.0 - truth.alpha - truth.beta);
    CHECK(stats::variance(x) == doctest::Approx(stat_var).epsilon(0.15));
}

TEST_CASE("simulation is reproducible by seed") {
    const GarchParams p = tiny_params();
    CHECK(simulate_garch(p, 50, 7) == simulate_garch(p, 50, 7));
    CHECK(simulate_garch(p, 50, 7) != simulate_garch(p, 50, 8));
}

TEST_CASE("fit recovers simulation parameters") {
    GarchParams truth;
    truth.mu = 0.07;
    truth.omega = 0.011;
    truth.alpha = 0.097;
    truth.beta = 0.901;
    truth.shape = 5.1;
    const std::vector<double> x = simulate_garch(truth, 6000, 123);
    const GarchFit fit = fit_garch(x);
    CHECK(fit.converged);
    CHECK(fit.params.mu == doctest::Approx(truth.mu).scale(1.0).epsilon(0.05));
    CHECK(fit.params.alpha == doctest::Approx(truth.alpha).scale(1.0).epsilon(0.05));
    CHECK(fit.params.beta == doctest::Approx(truth.beta).scale(1.0).epsilon(0.06));
    CHECK(fit.params.shape == doctest::Approx(truth.shape).scale(1.0).epsilon(1.5));
    CHECK(fit.params.omega > 0.0);
    // The fitted likelihood can't be worse than the truth's.
    CHECK(fit.loglik >= garch_loglik(x, truth) - 1e-6);
    // Standardized residuals should pass a white-noise check.
    const std::vector<double> z = garch_residuals(x, fit.params);
    CHECK(stats::ljung_box_pvalue(z, 10) > 0.01);
    CHECK(stats::variance(z) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("standard errors are finite and plausibly scaled") {
    GarchParams truth;
    truth.mu = 0.0;
    truth.omega = 0.05;
    truth.alpha = 0.1;
    truth.beta = 0.85;
    truth.shape = 8.0;
    const std::vector<double> x = simulate_garch(truth, 4000, 321);
    const GarchFit fit = fit_garch(x);
    REQUIRE(fit.se_valid);
    for (double se : fit.std_errors) {
        CHECK(std::isfinite(se));
        CHECK(se > 0.0);
        CHECK(se < 1.5);
    }
    // t-values and p-values line up with estimate / se.
    const auto est = fit.params.as_array();
    for (std::size_t i = 0; i < est.size(); ++i)
        CHECK(fit.t_values[i] == doctest::Approx(est[i] / fit.std_errors[i]).epsilon(1e-9));
}

TEST_CASE("sample mean mode pins mu") {
    const std::vector<double> x = simulate_garch(tiny_params(), 2500, 5);
    GarchOptions opts;
    opts.mean_mode = MeanMode::sample_mean;
    const GarchFit fit = fit_garch(x, opts);
    CHECK(fit.params.mu == doctest::Approx(stats::mean(x)).epsilon(1e-12));
    CHECK(fit.mean_mode == MeanMode::sample_mean);
}

TEST_CASE("fit rejects degenerate input") {
    CHECK_THROWS_AS(fit_garch(std::vector<double>{1.0, 1.0, 1.0, 1.0}), ValidationError);
    CHECK_THROWS_AS(fit_garch(std::vector<double>{}), ValidationError);
}

TEST_CASE("json serialization carries the parameter table") {
    const std::vector<double> x = simulate_garch(tiny_params(), 800, 9);
    const GarchFit fit = fit_garch(x);
    const std::string json = garch_to_json(fit);
    CHECK(json.find("\"omega\"") != std::string::npos);
    CHECK(json.find("\"loglik\"") != std::string::npos);
    CHECK(json.find("\"converged\"") != std::string::npos);
}
