#include "reglgc/garch.hpp"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "reglgc/errors.hpp"
#include "reglgc/optim.hpp"
#include "reglgc/rng.hpp"
#include "reglgc/stats.hpp"

namespace reglgc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Evaluation does not require alpha + beta < 1: the likelihood and the sigma
// recursion are well defined whenever the recursion stays positive, and ML
// estimates of persistent processes routinely land at or above 1.
void validate_params(const GarchParams& p) {
    if (!std::isfinite(p.mu)) throw ValidationError("garch: mu must be finite");
    if (!(p.omega > 0.0)) throw ValidationError("garch: omega must be positive");
    if (!(p.alpha >= 0.0) || !(p.beta >= 0.0))
        throw ValidationError("garch: alpha and beta must be nonnegative");
    if (!(p.shape > 2.0)) throw ValidationError("garch: shape must exceed 2");
}

// Evaluation needs only enough data for the presample variance; fitting
// keeps a higher floor.
void validate_values(std::span<const double> x) {
    if (x.size() < 2) throw ValidationError("garch: need at least 2 observations");
    for (double v : x)
        if (!std::isfinite(v)) throw ValidationError("garch: series contains non-finite values");
}

void validate_series(std::span<const double> x) {
    if (x.size() < 20) throw ValidationError("garch: need at least 20 observations");
    validate_values(x);
}

// Log-likelihood with the sigma recursion started at a_0 = 0 and
// sigma_0^2 = sample variance of x. Returns -inf on numerical failure.
double loglik_impl(std::span<const double> x, const GarchParams& p, double presample_var) {
    const std::size_t n = x.size();
    const double nu = p.shape;
    const double log_const =
        std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(stats::pi * (nu - 2.0));
    double sigma2 = presample_var;
    double a_prev2 = 0.0;
    double ll = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        sigma2 = p.omega + p.alpha * a_prev2 + p.beta * sigma2;
        if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) return -kInf;
        const double a = x[t] - p.mu;
        const double eps2 = a * a / sigma2;
        ll += log_const - 0.5 * (nu + 1.0) * std::log1p(eps2 / (nu - 2.0)) - 0.5 * std::log(sigma2);
        a_prev2 = a * a;
    }
    return std::isfinite(ll) ? ll : -kInf;
}

// Working parametrization keeps the optimizer unconstrained:
//   mu free, log omega, log alpha, log beta, log(shape - 2).
// Persistence is deliberately not capped at 1; a cap turns near-integrated
// samples into boundary optima with no usable curvature.
GarchParams params_from_working(const Eigen::VectorXd& w, bool mu_free, double fixed_mu) {
    GarchParams p;
    int k = 0;
    p.mu = mu_free ? w[k++] : fixed_mu;
    p.omega = std::exp(w[k++]);
    p.alpha = std::exp(w[k++]);
    p.beta = std::exp(w[k++]);
    p.shape = 2.0 + std::exp(w[k++]);
    return p;
}

Eigen::VectorXd working_from_params(const GarchParams& p, bool mu_free) {
    Eigen::VectorXd w(mu_free ? 5 : 4);
    int k = 0;
    if (mu_free) w[k++] = p.mu;
    w[k++] = std::log(p.omega);
    w[k++] = std::log(p.alpha);
    w[k++] = std::log(p.beta);
    w[k++] = std::log(p.shape - 2.0);
    return w;
}

}  // namespace

MeanMode mean_mode_from_string(const std::string& name) {
    if (name == "mle") return MeanMode::mle;
    if (name == "sample_mean") return MeanMode::sample_mean;
    throw ValidationError("unknown mean mode '" + name + "' (expected mle or sample_mean)");
}

std::string to_string(MeanMode mode) {
    return mode == MeanMode::mle ? "mle" : "sample_mean";
}

double garch_loglik(std::span<const double> x, const GarchParams& p) {
    validate_values(x);
    validate_params(p);
    return loglik_impl(x, p, stats::variance(x));
}

GarchFit fit_garch(std::span<const double> x, const GarchOptions& opts) {
    validate_series(x);
    const double sample_mean = stats::mean(x);
    const double sample_var = stats::variance(x);
    if (!(sample_var > 0.0)) throw ValidationError("garch: series has zero variance");

    const bool mu_free = opts.mean_mode == MeanMode::mle;
    const double fixed_mu = sample_mean;

    auto negloglik = [&](const Eigen::VectorXd& w) {
        const GarchParams p = params_from_working(w, mu_free, fixed_mu);
        return -loglik_impl(x, p, sample_var);
    };
    const optim::FGrad fg = optim::with_fd_gradient(negloglik);

    // Moment-based start: modest ARCH, high persistence, nu = 8.
    GarchParams start;
    start.mu = sample_mean;
    start.alpha = 0.05;
    start.beta = 0.90;
    start.omega = sample_var * (1.0 - start.alpha - start.beta);
    start.shape = 8.0;
    const Eigen::VectorXd w0 = working_from_params(start, mu_free);

    optim::Options oopts;
    oopts.max_iter = opts.max_iter;

    optim::Result best;
    best.f = kInf;
    bool have_fit = false;
    Rng rng(opts.seed);
    for (int attempt = 0; attempt <= opts.restarts; ++attempt) {
        Eigen::VectorXd w = w0;
        if (attempt > 0) {
            for (Eigen::Index i = 0; i < w.size(); ++i) w[i] += 0.5 * rng.normal();
        }
        try {
            optim::Result r = optim::minimize(fg, w, oopts);
            if (std::isfinite(r.f) && (!have_fit || r.f < best.f)) {
                best = r;
                have_fit = true;
            }
        } catch (const NumericalError&) {
            // Jittered start landed in an infeasible region; try the next one.
        }
    }
    if (!have_fit) throw NumericalError("garch: all optimization starts failed");

    GarchFit fit;
    fit.params = params_from_working(best.x, mu_free, fixed_mu);
    fit.loglik = -best.f;
    fit.converged = best.converged;
    fit.mean_mode = opts.mean_mode;
    if (!best.converged)
        fit.warnings.push_back("optimizer did not meet convergence tolerances");
    if (fit.params.alpha + fit.params.beta > 0.999)
        fit.warnings.push_back("persistence alpha + beta is close to 1");

    if (opts.standard_errors) {
        // Hessian of the negative log-likelihood in natural coordinates;
        // fixed-mean fits keep mu out of the information matrix.
        auto natural_negll = [&](const Eigen::VectorXd& v) {
            GarchParams p;
            int k = 0;
            p.mu = mu_free ? v[k++] : fixed_mu;
            p.omega = v[k++];
            p.alpha = v[k++];
            p.beta = v[k++];
            p.shape = v[k++];
            if (!(p.omega > 0.0) || p.alpha < 0.0 || p.beta < 0.0 || p.shape <= 2.0) return kInf;
            return -loglik_impl(x, p, sample_var);
        };
        const int n_free = mu_free ? 5 : 4;
        Eigen::VectorXd theta(n_free);
        {
            int k = 0;
            if (mu_free) theta[k++] = fit.params.mu;
            theta[k++] = fit.params.omega;
            theta[k++] = fit.params.alpha;
            theta[k++] = fit.params.beta;
            theta[k++] = fit.params.shape;
        }
        const Eigen::MatrixXd hess = optim::fd_hessian(natural_negll, theta, 1e-4);
        bool ok = hess.allFinite();
        Eigen::MatrixXd cov;
        if (ok) {
            Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
            ok = ldlt.info() == Eigen::Success && ldlt.isPositive();
            if (ok) {
                cov = ldlt.solve(Eigen::MatrixXd::Identity(n_free, n_free));
                ok = cov.allFinite() && (cov.diagonal().array() > 0.0).all();
            }
        }
        if (ok) {
            fit.se_valid = true;
            const double nan = std::numeric_limits<double>::quiet_NaN();
            fit.std_errors.fill(nan);
            fit.t_values.fill(nan);
            fit.p_values.fill(nan);
            const auto est = fit.params.as_array();
            int k = 0;
            for (int j = 0; j < 5; ++j) {
                if (j == 0 && !mu_free) continue;  // mu held fixed
                const double se = std::sqrt(cov(k, k));
                fit.std_errors[static_cast<std::size_t>(j)] = se;
                const double t = est[static_cast<std::size_t>(j)] / se;
                fit.t_values[static_cast<std::size_t>(j)] = t;
                fit.p_values[static_cast<std::size_t>(j)] =
                    2.0 * (1.0 - stats::norm_cdf(std::fabs(t)));
                ++k;
            }
        } else {
            fit.warnings.push_back("information matrix not positive definite; no standard errors");
        }
    }
    return fit;
}

std::vector<double> garch_sigma_path(std::span<const double> x, const GarchParams& p) {
    validate_values(x);
    validate_params(p);
    std::vector<double> sigma(x.size());
    double sigma2 = stats::variance(x);
    double a_prev2 = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        sigma2 = p.omega + p.alpha * a_prev2 + p.beta * sigma2;
        sigma[t] = std::sqrt(sigma2);
        const double a = x[t] - p.mu;
        a_prev2 = a * a;
    }
    return sigma;
}

std::vector<double> garch_residuals(std::span<const double> x, const GarchParams& p) {
    const std::vector<double> sigma = garch_sigma_path(x, p);
    std::vector<double> eps(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) eps[t] = (x[t] - p.mu) / sigma[t];
    return eps;
}

std::vector<double> simulate_garch(const GarchParams& p, std::size_t n, std::uint64_t seed) {
    validate_params(p);
    if (!(p.alpha + p.beta < 1.0))
        throw ValidationError("simulate_garch: alpha + beta must be below 1");
    if (n == 0) throw ValidationError("simulate_garch: n must be positive");
    Rng rng(seed);
    const double nu = p.shape;
    // Unit-variance t draws: t_nu scaled by sqrt((nu-2)/nu).
    auto draw_eps = [&] {
        const double z = rng.normal();
        const double chi2 = 2.0 * rng.gamma(0.5 * nu);
        return z / std::sqrt(chi2 / nu) * std::sqrt((nu - 2.0) / nu);
    };
    const std::size_t burn = 250;
    double sigma2 = p.omega / (1.0 - p.alpha - p.beta);
    double a_prev = 0.0;
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t t = 0; t < burn + n; ++t) {
        sigma2 = p.omega + p.alpha * a_prev * a_prev + p.beta * sigma2;
        const double a = std::sqrt(sigma2) * draw_eps();
        if (t >= burn) out.push_back(p.mu + a);
        a_prev = a;
    }
    return out;
}

std::string garch_to_json(const GarchFit& fit) {
    auto num = [](double v) -> nlohmann::json {
        if (std::isnan(v)) return nullptr;
        return v;
    };
    static const char* names[5] = {"mu", "omega", "alpha", "beta", "shape"};
    const auto est = fit.params.as_array();
    nlohmann::json params = nlohmann::json::array();
    for (int j = 0; j < 5; ++j) {
        const auto i = static_cast<std::size_t>(j);
        params.push_back({{"name", names[j]},
                          {"estimate", est[i]},
                          {"std_error", fit.se_valid ? num(fit.std_errors[i]) : nlohmann::json(nullptr)},
                          {"t_value", fit.se_valid ? num(fit.t_values[i]) : nlohmann::json(nullptr)},
                          {"p_value", fit.se_valid ? num(fit.p_values[i]) : nlohmann::json(nullptr)}});
    }
    nlohmann::json j{{"model", "garch11_t"},
                     {"mean_mode", to_string(fit.mean_mode)},
                     {"parameters", params},
                     {"loglik", fit.loglik},
                     {"converged", fit.converged},
                     {"warnings", fit.warnings}};
    return j.dump(2) + "\n";
}

}  // namespace reglgc
