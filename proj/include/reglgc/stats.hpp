#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace reglgc::stats {

inline constexpr double pi = 3.14159265358979323846;

double norm_pdf(double x);
double norm_cdf(double x);
// Inverse standard normal CDF (Wichura's AS 241, double precision).
double norm_quantile(double p);

double mean(std::span<const double> x);
// Sample variance, n-1 denominator.
double variance(std::span<const double> x);
double sd(std::span<const double> x);
// Moment-based (biased, n denominator) skewness and kurtosis; kurtosis is
// the raw fourth standardized moment, not excess.
double skewness(std::span<const double> x);
double kurtosis(std::span<const double> x);
double jarque_bera(std::span<const double> x);

double min(std::span<const double> x);
double max(std::span<const double> x);

// Type-7 quantile of already-sorted data, p in [0, 1].
double quantile_sorted(std::span<const double> sorted, double p);
// Convenience: copies, sorts, then quantile_sorted.
double quantile(std::span<const double> x, double p);
double median(std::span<const double> x);
double iqr(std::span<const double> x);

double pearson_corr(std::span<const double> a, std::span<const double> b);

// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
double chi2_cdf(double x, double dof);

// Ljung-Box statistic on x with `lags` autocorrelation terms.
double ljung_box(std::span<const double> x, int lags);
double ljung_box_pvalue(std::span<const double> x, int lags);

// Regularized incomplete beta I_x(a, b).
double beta_inc(double a, double b, double x);

double binom_pmf(int k, int n, double p);
double binom_cdf(int k, int n, double p);

// Smallest central acceptance region [lo, hi] of Binomial(n, p) holding at
// least `coverage` probability: equal tails, each tail <= (1-coverage)/2.
std::pair<int, int> binom_central_region(int n, double p, double coverage);

// Clopper-Pearson confidence interval for a proportion.
std::pair<double, double> binom_ci(int k, int n, double confidence);

}  // namespace reglgc::stats
