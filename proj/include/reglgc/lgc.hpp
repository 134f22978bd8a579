#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace reglgc {

// Evaluation grid: the map is estimated at every (x[i], y[j]) pair.
struct LgcGrid {
    std::vector<double> x;
    std::vector<double> y;

    std::size_t size() const { return x.size() * y.size(); }
    bool same_as(const LgcGrid& other) const;
};

struct GridSpec {
    int n = 7;               // points per axis
    double lo_pct = 0.05;    // percentile range, type-7 quantiles
    double hi_pct = 0.95;
};

struct BandwidthSpec {
    // Rule of thumb: b_j = factor * sd of component j. Explicit values win.
    double factor = 1.1;
    std::optional<double> b1;
    std::optional<double> b2;
};

struct Bandwidths {
    double b1 = 0.0;
    double b2 = 0.0;
};

LgcGrid make_grid(std::span<const double> a, std::span<const double> b, const GridSpec& spec);
Bandwidths resolve_bandwidths(std::span<const double> a, std::span<const double> b,
                              const BandwidthSpec& spec);

// Local Gaussian parameters at one gridpoint.
struct LocalFit {
    double mu1 = 0.0, mu2 = 0.0;
    double sigma1 = 1.0, sigma2 = 1.0;
    double rho = 0.0;
    bool converged = false;
    double weight = 0.0;  // inclusion mask: 1 kept, 0 masked out
    double mass = 0.0;    // mean kernel weight at this point
};

struct LgcMap {
    LgcGrid grid;
    // Row-major over (ix, iy): index = ix * grid.y.size() + iy.
    std::vector<LocalFit> fits;
    Bandwidths bandwidths;
    std::size_t n_obs = 0;

    const LocalFit& at(std::size_t ix, std::size_t iy) const {
        return fits[ix * grid.y.size() + iy];
    }
};

// Local log-likelihood of theta at gridpoint (x1, x2): the kernel-weighted
// mean of log psi minus the kernel-smoothed density integral. The kernel is
// the unnormalized product Gaussian (value 1 at the gridpoint), under which
// the integral term tends to 1 as the bandwidths grow.
double local_loglik(std::span<const double> a, std::span<const double> b, double x1, double x2,
                    const Bandwidths& bw, double mu1, double mu2, double sigma1, double sigma2,
                    double rho);

// Closed form of the integral term at theta.
double local_integral_term(double x1, double x2, const Bandwidths& bw, double mu1, double mu2,
                           double sigma1, double sigma2, double rho);

// Fits the five local parameters at one gridpoint by quasi-Newton ascent.
// `init` seeds the optimizer; pass nullptr to start from the local weighted
// moments.
LocalFit fit_local_gaussian(std::span<const double> a, std::span<const double> b, double x1,
                            double x2, const Bandwidths& bw, const LocalFit* init = nullptr);

// Full map over the grid. `warm` (same grid) seeds each gridpoint fit, used
// by the bootstrap to start replicate maps at the observed solution.
// Low-mass gridpoints (mean kernel weight below `mass_floor`) are masked:
// weight 0, no fit attempted.
LgcMap estimate_map(std::span<const double> a, std::span<const double> b, const LgcGrid& grid,
                    const Bandwidths& bw, const LgcMap* warm = nullptr,
                    double mass_floor = 1e-4);

std::string map_to_csv(const LgcMap& map);
std::string map_to_json(const LgcMap& map);

}  // namespace reglgc
