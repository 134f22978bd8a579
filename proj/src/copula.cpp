#include "reglgc/copula.hpp"

#include <algorithm>
#include <cmath>

#include "reglgc/errors.hpp"
#include "reglgc/stats.hpp"

namespace reglgc {

CopulaFamily copula_family_from_string(const std::string& name) {
    if (name == "clayton") return CopulaFamily::clayton;
    if (name == "gumbel") return CopulaFamily::gumbel;
    if (name == "gaussian") return CopulaFamily::gaussian;
    throw ValidationError("unknown copula family '" + name + "'");
}

std::string to_string(CopulaFamily family) {
    switch (family) {
        case CopulaFamily::clayton: return "clayton";
        case CopulaFamily::gumbel: return "gumbel";
        case CopulaFamily::gaussian: return "gaussian";
    }
    throw ValidationError("invalid copula family value");
}

void CopulaSpec::validate() const {
    switch (family) {
        case CopulaFamily::clayton:
            if (!(param > 0.0)) throw ValidationError("clayton: theta must be positive");
            break;
        case CopulaFamily::gumbel:
            if (!(param >= 1.0)) throw ValidationError("gumbel: theta must be >= 1");
            break;
        case CopulaFamily::gaussian:
            if (!(param > -1.0 && param < 1.0))
                throw ValidationError("gaussian: rho must lie in (-1, 1)");
            break;
    }
    if (!(sd_a > 0.0) || !(sd_b > 0.0))
        throw ValidationError("copula spec: marginal standard deviations must be positive");
    if (!std::isfinite(mean_a) || !std::isfinite(mean_b))
        throw ValidationError("copula spec: marginal means must be finite");
}

void sample_copula_uniforms(CopulaFamily family, double param, Rng& rng, double* u, double* v) {
    switch (family) {
        case CopulaFamily::clayton: {
            // Marshall-Olkin: gamma frailty V, u_i = (1 + E_i / V)^(-1/theta).
            const double theta = param;
            const double frailty = rng.gamma(1.0 / theta);
            const double e1 = rng.exponential();
            const double e2 = rng.exponential();
            *u = std::pow(1.0 + e1 / frailty, -1.0 / theta);
            *v = std::pow(1.0 + e2 / frailty, -1.0 / theta);
            return;
        }
        case CopulaFamily::gumbel: {
            const double theta = param;
            if (theta == 1.0) {
                // Independence; the stable sampler degenerates at alpha = 1.
                *u = rng.uniform_pos();
                *v = rng.uniform_pos();
                return;
            }
            // Positive stable frailty with alpha = 1/theta.
            const double frailty = rng.positive_stable(1.0 / theta);
            const double e1 = rng.exponential();
            const double e2 = rng.exponential();
            *u = std::exp(-std::pow(e1 / frailty, 1.0 / theta));
            *v = std::exp(-std::pow(e2 / frailty, 1.0 / theta));
            return;
        }
        case CopulaFamily::gaussian: {
            const double rho = param;
            const double z1 = rng.normal();
            const double z2 = rho * z1 + std::sqrt(1.0 - rho * rho) * rng.normal();
            *u = stats::norm_cdf(z1);
            *v = stats::norm_cdf(z2);
            return;
        }
    }
    throw ValidationError("invalid copula family value");
}

void sample_into(const CopulaSpec& spec, std::size_t n, Rng& rng, double* out_a, double* out_b) {
    spec.validate();
    // Guard against copula draws rounding to exactly 0 or 1, where the
    // normal quantile is infinite.
    constexpr double lo = 1e-300;
    const double hi = 1.0 - 1.1102230246251565e-16;
    for (std::size_t i = 0; i < n; ++i) {
        double u, v;
        sample_copula_uniforms(spec.family, spec.param, rng, &u, &v);
        u = std::min(std::max(u, lo), hi);
        v = std::min(std::max(v, lo), hi);
        out_a[i] = spec.mean_a + spec.sd_a * stats::norm_quantile(u);
        out_b[i] = spec.mean_b + spec.sd_b * stats::norm_quantile(v);
    }
}

ReturnSeries sample_copula(const CopulaSpec& spec, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ValidationError("sample_copula: n must be positive");
    std::vector<double> a(n), b(n);
    Rng rng(seed);
    sample_into(spec, n, rng, a.data(), b.data());
    return ReturnSeries::from_values(std::move(a), std::move(b));
}

double kendall_tau(CopulaFamily family, double param) {
    switch (family) {
        case CopulaFamily::clayton:
            if (!(param > 0.0)) throw ValidationError("clayton: theta must be positive");
            return param / (param + 2.0);
        case CopulaFamily::gumbel:
            if (!(param >= 1.0)) throw ValidationError("gumbel: theta must be >= 1");
            return 1.0 - 1.0 / param;
        case CopulaFamily::gaussian:
            if (!(param > -1.0 && param < 1.0))
                throw ValidationError("gaussian: rho must lie in (-1, 1)");
            return 2.0 / stats::pi * std::asin(param);
    }
    throw ValidationError("invalid copula family value");
}

}  // namespace reglgc
