#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace reglgc {

enum class MeanMode { mle, sample_mean };

MeanMode mean_mode_from_string(const std::string& name);
std::string to_string(MeanMode mode);

// GARCH(1,1) with Student-t innovations standardized to unit variance:
//   x_t = mu + a_t,  a_t = sigma_t eps_t,
//   sigma_t^2 = omega + alpha a_{t-1}^2 + beta sigma_{t-1}^2.
struct GarchParams {
    double mu = 0.0;
    double omega = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double shape = 0.0;  // t degrees of freedom, > 2

    std::array<double, 5> as_array() const { return {mu, omega, alpha, beta, shape}; }
};

struct GarchFit {
    GarchParams params;
    double loglik = 0.0;
    bool converged = false;
    MeanMode mean_mode = MeanMode::mle;

    // Order matches GarchParams::as_array: mu, omega, alpha, beta, shape.
    std::array<double, 5> std_errors{};
    std::array<double, 5> t_values{};
    std::array<double, 5> p_values{};
    bool se_valid = false;

    std::vector<std::string> warnings;
};

struct GarchOptions {
    MeanMode mean_mode = MeanMode::mle;
    int restarts = 3;           // jittered starts beyond the moment-based one
    int max_iter = 600;
    bool standard_errors = true;
    std::uint64_t seed = 0x6a3c;
};

// Negative average evaluation entry point used by the fitter and by tests:
// full-sample log-likelihood at the given parameters.
double garch_loglik(std::span<const double> x, const GarchParams& p);

GarchFit fit_garch(std::span<const double> x, const GarchOptions& opts = {});

// Conditional standard deviations sigma_t implied by the parameters.
std::vector<double> garch_sigma_path(std::span<const double> x, const GarchParams& p);

// Standardized residuals (x_t - mu) / sigma_t.
std::vector<double> garch_residuals(std::span<const double> x, const GarchParams& p);

// Simulates n observations after a stationary burn-in.
std::vector<double> simulate_garch(const GarchParams& p, std::size_t n, std::uint64_t seed);

std::string garch_to_json(const GarchFit& fit);

}  // namespace reglgc
