#include "reglgc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "reglgc/errors.hpp"

namespace reglgc::stats {

namespace {

void require_nonempty(std::span<const double> x, const char* who) {
    if (x.empty()) throw ValidationError(std::string(who) + ": empty input");
}

double horner(const double* c, int n, double r) {
    double v = c[n - 1];
    for (int i = n - 2; i >= 0; --i) v = v * r + c[i];
    return v;
}

}  // namespace

double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * pi);
}

double norm_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double norm_quantile(double p) {
    // Wichura (1988), algorithm AS 241, PPND16.
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -std::numeric_limits<double>::infinity();
        if (p == 1.0) return std::numeric_limits<double>::infinity();
        throw ValidationError("norm_quantile: p outside [0, 1]");
    }
    static const double a[8] = {
        3.3871328727963666080e0,  1.3314166789178437745e2,  1.9715909503065514427e3,
        1.3731693765509461125e4,  4.5921953931549871457e4,  6.7265770927008700853e4,
        3.3430575583588128105e4,  2.5090809287301226727e3};
    static const double b[8] = {
        1.0,                      4.2313330701600911252e1,  6.8718700749205790830e2,
        5.3941960214247511077e3,  2.1213794301586595867e4,  3.9307895800092710610e4,
        2.8729085735721942674e4,  5.2264952788528545610e3};
    static const double c[8] = {
        1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
        3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
        2.27238449892691845833e-2, 7.74545014278341407640e-4};
    static const double d[8] = {
        1.0,                      2.05319162663775882187e0, 1.67638483018380384940e0,
        6.89767334985100004550e-1, 1.48103976427480074590e-1, 1.51986665636164571966e-2,
        5.47593808499534494600e-4, 1.05075007164441684324e-9};
    static const double e[8] = {
        6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
        2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
        2.71155556874348757815e-5, 2.01033439929228813265e-7};
    static const double f[8] = {
        1.0,                      5.99832206555887937690e-1, 1.36929880922735805310e-1,
        1.48753612908506148525e-2, 7.86869131145613259100e-4, 1.84631831751005468180e-5,
        1.42151175831644588870e-7, 2.04426310338993978564e-15};

    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q * horner(a, 8, r) / horner(b, 8, r);
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double value;
    if (r <= 5.0) {
        r -= 1.6;
        value = horner(c, 8, r) / horner(d, 8, r);
    } else {
        r -= 5.0;
        value = horner(e, 8, r) / horner(f, 8, r);
    }
    return q < 0.0 ? -value : value;
}

double mean(std::span<const double> x) {
    require_nonempty(x, "mean");
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
    if (x.size() < 2) throw ValidationError("variance: need at least 2 observations");
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

double sd(std::span<const double> x) {
    return std::sqrt(variance(x));
}

double skewness(std::span<const double> x) {
    require_nonempty(x, "skewness");
    const double m = mean(x);
    double m2 = 0.0, m3 = 0.0;
    for (double v : x) {
        const double d = v - m;
        m2 += d * d;
        m3 += d * d * d;
    }
    const double n = static_cast<double>(x.size());
    m2 /= n;
    m3 /= n;
    if (m2 <= 0.0) throw NumericalError("skewness: zero variance");
    return m3 / std::pow(m2, 1.5);
}

double kurtosis(std::span<const double> x) {
    require_nonempty(x, "kurtosis");
    const double m = mean(x);
    double m2 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d = (v - m) * (v - m);
        m2 += d;
        m4 += d * d;
    }
    const double n = static_cast<double>(x.size());
    m2 /= n;
    m4 /= n;
    if (m2 <= 0.0) throw NumericalError("kurtosis: zero variance");
    return m4 / (m2 * m2);
}

double jarque_bera(std::span<const double> x) {
    const double s = skewness(x);
    const double k = kurtosis(x);
    const double n = static_cast<double>(x.size());
    return n / 6.0 * (s * s + 0.25 * (k - 3.0) * (k - 3.0));
}

double min(std::span<const double> x) {
    require_nonempty(x, "min");
    return *std::min_element(x.begin(), x.end());
}

double max(std::span<const double> x) {
    require_nonempty(x, "max");
    return *std::max_element(x.begin(), x.end());
}

double quantile_sorted(std::span<const double> sorted, double p) {
    require_nonempty(sorted, "quantile");
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("quantile: p outside [0, 1]");
    const std::size_t n = sorted.size();
    const double h = (static_cast<double>(n) - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double w = h - static_cast<double>(lo);
    return (1.0 - w) * sorted[lo] + w * sorted[hi];
}

double quantile(std::span<const double> x, double p) {
    std::vector<double> copy(x.begin(), x.end());
    std::sort(copy.begin(), copy.end());
    return quantile_sorted(copy, p);
}

double median(std::span<const double> x) {
    return quantile(x, 0.5);
}

double iqr(std::span<const double> x) {
    std::vector<double> copy(x.begin(), x.end());
    std::sort(copy.begin(), copy.end());
    return quantile_sorted(copy, 0.75) - quantile_sorted(copy, 0.25);
}

double pearson_corr(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ValidationError("pearson_corr: length mismatch");
    if (a.size() < 2) throw ValidationError("pearson_corr: need at least 2 observations");
    const double ma = mean(a), mb = mean(b);
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) throw NumericalError("pearson_corr: zero variance");
    return sab / std::sqrt(saa * sbb);
}

double gamma_p(double a, double x) {
    if (!(a > 0.0)) throw ValidationError("gamma_p: a must be positive");
    if (x < 0.0) throw ValidationError("gamma_p: x must be nonnegative");
    if (x == 0.0) return 0.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        // Series representation.
        double term = 1.0 / a;
        double sum = term;
        double ap = a;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
        }
        return sum * std::exp(-x + a * std::log(x) - lg);
    }
    // Continued fraction for Q(a, x), modified Lentz.
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-16) break;
    }
    const double q = std::exp(-x + a * std::log(x) - lg) * h;
    return 1.0 - q;
}

double chi2_cdf(double x, double dof) {
    if (x <= 0.0) return 0.0;
    return gamma_p(0.5 * dof, 0.5 * x);
}

double ljung_box(std::span<const double> x, int lags) {
    const std::size_t n = x.size();
    if (lags < 1) throw ValidationError("ljung_box: lags must be >= 1");
    if (n <= static_cast<std::size_t>(lags))
        throw ValidationError("ljung_box: series shorter than lag count");
    const double m = mean(x);
    double c0 = 0.0;
    for (double v : x) c0 += (v - m) * (v - m);
    if (c0 <= 0.0) throw NumericalError("ljung_box: zero variance");
    double q = 0.0;
    for (int k = 1; k <= lags; ++k) {
        double ck = 0.0;
        for (std::size_t t = static_cast<std::size_t>(k); t < n; ++t)
            ck += (x[t] - m) * (x[t - static_cast<std::size_t>(k)] - m);
        const double rk = ck / c0;
        q += rk * rk / static_cast<double>(n - static_cast<std::size_t>(k));
    }
    const double nn = static_cast<double>(n);
    return nn * (nn + 2.0) * q;
}

double ljung_box_pvalue(std::span<const double> x, int lags) {
    return 1.0 - chi2_cdf(ljung_box(x, lags), static_cast<double>(lags));
}

namespace {

double beta_cf(double a, double b, double x) {
    // Continued fraction for the incomplete beta, modified Lentz.
    const double tiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        const double dm = static_cast<double>(m);
        double aa = dm * (b - dm) * x / ((qam + 2.0 * dm) * (a + 2.0 * dm));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + dm) * (qab + dm) * x / ((a + 2.0 * dm) * (qap + 2.0 * dm));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-16) break;
    }
    return h;
}

}  // namespace

double beta_inc(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw ValidationError("beta_inc: a, b must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lbeta = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
    const double front = std::exp(lbeta + a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double binom_pmf(int k, int n, double p) {
    if (n < 0 || k < 0 || k > n) return 0.0;
    if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
    if (p >= 1.0) return k == n ? 1.0 : 0.0;
    const double lc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    return std::exp(lc + k * std::log(p) + (n - k) * std::log1p(-p));
}

double binom_cdf(int k, int n, double p) {
    if (k < 0) return 0.0;
    if (k >= n) return 1.0;
    // P(X <= k) = I_{1-p}(n-k, k+1).
    return beta_inc(static_cast<double>(n - k), static_cast<double>(k + 1), 1.0 - p);
}

std::pair<int, int> binom_central_region(int n, double p, double coverage) {
    if (n < 1) throw ValidationError("binom_central_region: n must be >= 1");
    if (!(coverage > 0.0 && coverage < 1.0))
        throw ValidationError("binom_central_region: coverage outside (0, 1)");
    const double tail = 0.5 * (1.0 - coverage);
    int lo = 0;
    while (lo < n && binom_cdf(lo, n, p) <= tail) ++lo;
    int hi = n;
    while (hi > 0 && 1.0 - binom_cdf(hi - 1, n, p) <= tail) --hi;
    if (hi < lo) hi = lo;
    return {lo, hi};
}

namespace {

double beta_quantile(double prob, double a, double b) {
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (beta_inc(a, b, mid) < prob)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

std::pair<double, double> binom_ci(int k, int n, double confidence) {
    if (n < 1 || k < 0 || k > n) throw ValidationError("binom_ci: invalid k or n");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw ValidationError("binom_ci: confidence outside (0, 1)");
    const double alpha = 1.0 - confidence;
    const double lo =
        k == 0 ? 0.0 : beta_quantile(0.5 * alpha, static_cast<double>(k), static_cast<double>(n - k + 1));
    const double hi =
        k == n ? 1.0 : beta_quantile(1.0 - 0.5 * alpha, static_cast<double>(k + 1), static_cast<double>(n - k));
    return {lo, hi};
}

}  // namespace reglgc::stats
