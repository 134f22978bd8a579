#include <doctest.h>

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "reglgc/copula.hpp"
#include "reglgc/errors.hpp"
#include "reglgc/lgc.hpp"
#include "reglgc/rng.hpp"
#include "reglgc/stats.hpp"

using namespace reglgc;

namespace {

// Nodes and weights for 64-point Gauss-Legendre on [-1, 1], generated by
// Newton iteration on the Legendre polynomial. Used to integrate the
// kernel-smoothed density independently of the closed form under test.
struct GaussLegendre {
    std::vector<double> nodes, weights;

    explicit GaussLegendre(int n) {
        nodes.resize(static_cast<std::size_t>(n));
        weights.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            double x = std::cos(stats::pi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                double p0 = 1.0, p1 = x;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::fabs(dx) < 1e-15) break;
            }
            nodes[static_cast<std::size_t>(i)] = x;
            weights[static_cast<std::size_t>(i)] =
                2.0 / ((1.0 - x * x) * dp * dp);
        }
    }
};

// Composite panels along one axis: the product of kernel and density only
// has mass where both factors do, and for a correlated density the sharpest
// feature along either axis is the conditional standard deviation. Panels
// two conditional sds wide with 20 nodes each resolve that comfortably.
std::vector<std::pair<double, double>> panel_nodes(double lo, double hi, double scale) {
    static const GaussLegendre gl(20);
    std::vector<std::pair<double, double>> out;
    const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / (2.0 * scale))));
    for (int p = 0; p < panels; ++p) {
        const double a = lo + (hi - lo) * p / panels;
        const double b = lo + (hi - lo) * (p + 1) / panels;
        for (std::size_t i = 0; i < gl.nodes.size(); ++i)
            out.emplace_back(0.5 * (gl.nodes[i] + 1.0) * (b - a) + a,
                             gl.weights[i] * 0.5 * (b - a));
    }
    return out;
}

double quadrature_integral(double x1, double x2, const Bandwidths& bw, double mu1, double mu2,
                           double s1, double s2, double rho) {
    // Intersection of the 10-sigma supports of the two factors per axis.
    const double lo1 = std::max(x1 - 10.0 * bw.b1, mu1 - 10.0 * s1);
    const double hi1 = std::min(x1 + 10.0 * bw.b1, mu1 + 10.0 * s1);
    const double lo2 = std::max(x2 - 10.0 * bw.b2, mu2 - 10.0 * s2);
    const double hi2 = std::min(x2 + 10.0 * bw.b2, mu2 + 10.0 * s2);
    if (lo1 >= hi1 || lo2 >= hi2) return 0.0;
    const double omr = 1.0 - rho * rho;
    const double sq = std::sqrt(omr);
    const double norm = 1.0 / (2.0 * stats::pi * s1 * s2 * sq);
    const auto grid1 = panel_nodes(lo1, hi1, std::min(bw.b1, s1 * sq));
    const auto grid2 = panel_nodes(lo2, hi2, std::min(bw.b2, s2 * sq));
    double acc = 0.0;
    for (const auto& [v1, w1] : grid1) {
        const double ka = (v1 - x1) / bw.b1;
        const double u = (v1 - mu1) / s1;
        double inner = 0.0;
        for (const auto& [v2, w2] : grid2) {
            const double kb = (v2 - x2) / bw.b2;
            const double v = (v2 - mu2) / s2;
            const double kern = std::exp(-0.5 * ka * ka - 0.5 * kb * kb);
            const double psi = norm * std::exp(-0.5 * (u * u - 2.0 * rho * u * v + v * v) / omr);
            inner += w2 * kern * psi;
        }
        acc += w1 * inner;
    }
    return acc;
}

std::pair<std::vector<double>, std::vector<double>> gaussian_sample(std::size_t n, double rho,
                                                                    std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> a(n), b(n);
    const double c = std::sqrt(1.0 - rho * rho);
    for (std::size_t i = 0; i < n; ++i) {
        const double z1 = rng.normal(), z2 = rng.normal();
        a[i] = z1;
        b[i] = rho * z1 + c * z2;
    }
    return {a, b};
}

}  // namespace

TEST_CASE("local log-likelihood matches an external reference") {
    const std::vector<double> a = {0.5, -0.3, 1.2, 0.1, -0.8, 0.9, -0.2, 0.4};
    const std::vector<double> b = {0.2, -0.5, 0.9, 0.3, -1.1, 0.7, 0.1, -0.4};
    const Bandwidths bw{0.8, 0.9};
    CHECK(local_integral_term(0.25, 0.10, bw, 0.1, 0.05, 1.1, 0.95, 0.35) ==
          doctest::Approx(0.410774753700747).epsilon(1e-12));
    CHECK(local_loglik(a, b, 0.25, 0.10, bw, 0.1, 0.05, 1.1, 0.95, 0.35) ==
          doctest::Approx(-1.74563826851014).epsilon(1e-12));
}

TEST_CASE("integral term agrees with quadrature over random parameters") {
    Rng rng(604);
    for (int trial = 0; trial < 150; ++trial) {
        const double x1 = -2.0 + 4.0 * rng.uniform();
        const double x2 = -2.0 + 4.0 * rng.uniform();
        const Bandwidths bw{0.3 + 1.5 * rng.uniform(), 0.3 + 1.5 * rng.uniform()};
        const double mu1 = -1.5 + 3.0 * rng.uniform();
        const double mu2 = -1.5 + 3.0 * rng.uniform();
        const double s1 = 0.4 + 1.6 * rng.uniform();
        const double s2 = 0.4 + 1.6 * rng.uniform();
        const double rho = -0.9 + 1.8 * rng.uniform();
        const double closed = local_integral_term(x1, x2, bw, mu1, mu2, s1, s2, rho);
        const double quad = quadrature_integral(x1, x2, bw, mu1, mu2, s1, s2, rho);
        CHECK(closed == doctest::Approx(quad).epsilon(1e-8));
    }
}

TEST_CASE("integral term tends to one for huge bandwidths") {
    const Bandwidths bw{150.0, 150.0};
    CHECK(local_integral_term(0.3, -0.2, bw, 0.1, 0.0, 1.2, 0.9, 0.4) ==
          doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("gridpoint fit satisfies the first-order conditions of the direct objective") {
    // The optimizer runs on a moment-based rewrite of the objective with
    // analytic gradients; verify its fixed point against the plain O(n)
    // evaluation route by central differences.
    auto [a, b] = gaussian_sample(600, 0.4, 2204);
    const Bandwidths bw{0.9, 0.9};
    for (const auto& point : {std::array<double, 2>{0.0, 0.0}, std::array<double, 2>{0.7, -0.5},
                              std::array<double, 2>{-1.1, 0.4}}) {
        const LocalFit fit = fit_local_gaussian(a, b, point[0], point[1], bw);
        REQUIRE(fit.converged);
        const double base = local_loglik(a, b, point[0], point[1], bw, fit.mu1, fit.mu2,
                                         fit.sigma1, fit.sigma2, fit.rho);
        const std::array<double, 5> theta = {fit.mu1, fit.mu2, fit.sigma1, fit.sigma2, fit.rho};
        for (std::size_t p = 0; p < 5; ++p) {
            const double h = 1e-5 * (1.0 + std::fabs(theta[p]));
            auto shifted = theta;
            shifted[p] = theta[p] + h;
            const double up = local_loglik(a, b, point[0], point[1], bw, shifted[0], shifted[1],
                                           shifted[2], shifted[3], shifted[4]);
            shifted[p] = theta[p] - h;
            const double dn = local_loglik(a, b, point[0], point[1], bw, shifted[0], shifted[1],
                                           shifted[2], shifted[3], shifted[4]);
            const double deriv = (up - dn) / (2.0 * h);
            INFO("parameter ", p);
            CHECK(deriv == doctest::Approx(0.0).scale(1.0).epsilon(2e-4));
            // And the point really is a local maximum along each axis.
            CHECK(up <= base + 1e-9);
            CHECK(dn <= base + 1e-9);
        }
    }
}

TEST_CASE("local correlation recovers the global one for gaussian data") {
    for (double rho : {-0.5, 0.0, 0.5}) {
        auto [a, b] = gaussian_sample(4000, rho, 913);
        const GridSpec spec;
        const LgcGrid grid = make_grid(a, b, spec);
        const Bandwidths bw = resolve_bandwidths(a, b, BandwidthSpec{});
        const LgcMap map = estimate_map(a, b, grid, bw);
        double err_sum = 0.0;
        int n_used = 0;
        for (const LocalFit& f : map.fits) {
            if (f.weight == 0.0 || !f.converged) continue;
            err_sum += std::fabs(f.rho - rho);
            ++n_used;
        }
        REQUIRE(n_used > 30);
        INFO("rho ", rho);
        CHECK(err_sum / n_used < 0.05);
    }
}

TEST_CASE("grid respects the percentile specification") {
    auto [a, b] = gaussian_sample(2000, 0.2, 4);
    GridSpec spec;
    spec.n = 5;
    spec.lo_pct = 0.10;
    spec.hi_pct = 0.90;
    const LgcGrid grid = make_grid(a, b, spec);
    REQUIRE(grid.x.size() == 5);
    REQUIRE(grid.y.size() == 5);
    CHECK(grid.x.front() == doctest::Approx(stats::quantile(a, 0.10)));
    CHECK(grid.x.back() == doctest::Approx(stats::quantile(a, 0.90)));
    CHECK(grid.y.front() == doctest::Approx(stats::quantile(b, 0.10)));
    // Equally spaced interior points.
    const double step = grid.x[1] - grid.x[0];
    CHECK(grid.x[2] - grid.x[1] == doctest::Approx(step).epsilon(1e-9));
    CHECK(grid.size() == 25);
}

TEST_CASE("bandwidth rule of thumb scales with the sample spread") {
    auto [a, b] = gaussian_sample(3000, 0.0, 6);
    for (auto& v : b) v *= 2.5;
    const Bandwidths bw = resolve_bandwidths(a, b, BandwidthSpec{});
    CHECK(bw.b1 == doctest::Approx(1.1 * stats::sd(a)).epsilon(1e-12));
    CHECK(bw.b2 == doctest::Approx(1.1 * stats::sd(b)).epsilon(1e-12));
    BandwidthSpec fixed;
    fixed.b1 = 0.7;
    fixed.b2 = 0.4;
    const Bandwidths bw2 = resolve_bandwidths(a, b, fixed);
    CHECK(bw2.b1 == doctest::Approx(0.7));
    CHECK(bw2.b2 == doctest::Approx(0.4));
}

TEST_CASE("far-out gridpoints are masked not fitted") {
    auto [a, b] = gaussian_sample(500, 0.3, 8);
    LgcGrid grid;
    grid.x = {0.0, 50.0};
    grid.y = {0.0, 50.0};
    const Bandwidths bw{0.5, 0.5};
    const LgcMap map = estimate_map(a, b, grid, bw);
    CHECK(map.at(0, 0).weight == 1.0);
    CHECK(map.at(0, 0).converged);
    CHECK(map.at(1, 1).weight == 0.0);
    CHECK(!map.at(1, 1).converged);
    CHECK(map.at(1, 1).mass < 1e-4);
}

TEST_CASE("map estimation is deterministic and warm starts stay on the solution") {
    auto [a, b] = gaussian_sample(800, -0.3, 10);
    const LgcGrid grid = make_grid(a, b, GridSpec{});
    const Bandwidths bw = resolve_bandwidths(a, b, BandwidthSpec{});
    const LgcMap m1 = estimate_map(a, b, grid, bw);
    const LgcMap m2 = estimate_map(a, b, grid, bw);
    REQUIRE(m1.fits.size() == m2.fits.size());
    for (std::size_t i = 0; i < m1.fits.size(); ++i) {
        CHECK(m1.fits[i].rho == m2.fits[i].rho);
        CHECK(m1.fits[i].mu1 == m2.fits[i].mu1);
    }
    // Re-estimating the same data warm-started from its own map lands on
    // the same optimum.
    const LgcMap m3 = estimate_map(a, b, grid, bw, &m1);
    for (std::size_t i = 0; i < m1.fits.size(); ++i) {
        if (!m1.fits[i].converged) continue;
        CHECK(m3.fits[i].rho == doctest::Approx(m1.fits[i].rho).scale(1.0).epsilon(1e-5));
    }
}

TEST_CASE("map csv has the documented header and full grid") {
    auto [a, b] = gaussian_sample(300, 0.1, 12);
    LgcGrid grid;
    grid.x = {-0.5, 0.5};
    grid.y = {-0.5, 0.0, 0.5};
    const LgcMap map = estimate_map(a, b, grid, Bandwidths{1.0, 1.0});
    const std::string csv = map_to_csv(map);
    CHECK(csv.rfind("x,y,mu1,mu2,sigma1,sigma2,rho,converged,weight\n", 0) == 0);
    // Header plus one line per gridpoint.
    std::size_t lines = 0;
    for (char ch : csv)
        if (ch == '\n') ++lines;
    CHECK(lines == 1 + grid.size());
    const std::string json = map_to_json(map);
    CHECK(json.find("\"bandwidth_1\"") != std::string::npos);
    CHECK(json.find("\"bandwidth_2\"") != std::string::npos);
    CHECK(json.find("\"fits\"") != std::string::npos);
}

TEST_CASE("degenerate inputs are rejected") {
    std::vector<double> a(50, 1.0), b(50, 2.0);
    // Constant components leave no spread to set a bandwidth from.
    CHECK_THROWS_AS(resolve_bandwidths(a, b, BandwidthSpec{}), ValidationError);
    std::vector<double> c = {1.0, 2.0};
    CHECK_THROWS_AS(local_loglik(c, c, 0, 0, Bandwidths{-1.0, 1.0}, 0, 0, 1, 1, 0),
                    ValidationError);
    CHECK_THROWS_AS(local_loglik(c, c, 0, 0, Bandwidths{1.0, 1.0}, 0, 0, -1.0, 1, 0),
                    ValidationError);
}
