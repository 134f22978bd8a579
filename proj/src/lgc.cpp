#include "reglgc/lgc.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "reglgc/csv.hpp"
#include "reglgc/errors.hpp"
#include "reglgc/optim.hpp"
#include "reglgc/stats.hpp"

namespace reglgc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTwoPi = 2.0 * stats::pi;

void validate_sample(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ValidationError("lgc: component lengths differ");
    if (a.size() < 2) throw ValidationError("lgc: need at least 2 observations");
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
            throw ValidationError("lgc: non-finite observation");
}

void validate_bandwidths(const Bandwidths& bw) {
    if (!(bw.b1 > 0.0) || !(bw.b2 > 0.0) || !std::isfinite(bw.b1) || !std::isfinite(bw.b2))
        throw ValidationError("lgc: bandwidths must be positive and finite");
}

// Kernel-weighted sums; the fit objective depends on the sample only
// through these six numbers, so optimizer steps cost O(1).
struct Moments {
    double w = 0, sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    double n = 0;
};

// Objective (negative local log-likelihood) over the working coordinates
// (mu1, mu2, log sigma1, log sigma2, atanh rho), with analytic gradient.
struct LocalObjective {
    Moments m;
    double x1, x2;
    double b1sq, b2sq;
    double integral_scale;  // 2 pi b1 b2

    double operator()(const Eigen::VectorXd& w, Eigen::VectorXd* grad) const {
        const double mu1 = w[0], mu2 = w[1];
        if (std::fabs(w[2]) > 40.0 || std::fabs(w[3]) > 40.0 || std::fabs(w[4]) > 20.0)
            return bail(grad);
        const double s1 = std::exp(w[2]);
        const double s2 = std::exp(w[3]);
        const double rho = std::tanh(w[4]);
        const double omr = 1.0 - rho * rho;
        if (!(omr > 0.0)) return bail(grad);

        // Standardized weighted moments.
        const double su = (m.sa - mu1 * m.w) / s1;
        const double sv = (m.sb - mu2 * m.w) / s2;
        const double su2 = (m.saa - 2.0 * mu1 * m.sa + mu1 * mu1 * m.w) / (s1 * s1);
        const double sv2 = (m.sbb - 2.0 * mu2 * m.sb + mu2 * mu2 * m.w) / (s2 * s2);
        const double suv = (m.sab - mu2 * m.sa - mu1 * m.sb + mu1 * mu2 * m.w) / (s1 * s2);

        const double c0 = -std::log(kTwoPi) - w[2] - w[3] - 0.5 * std::log(omr);
        const double sq = (su2 - 2.0 * rho * suv + sv2) / omr;
        const double data_term = (m.w * c0 - 0.5 * sq) / m.n;

        // Integral term: (2 pi b1 b2) N2(x; mu, Sigma + diag(b1^2, b2^2)).
        const double s00 = s1 * s1 + b1sq;
        const double s11 = s2 * s2 + b2sq;
        const double s01 = rho * s1 * s2;
        const double det = s00 * s11 - s01 * s01;
        if (!(det > 0.0) || !std::isfinite(det)) return bail(grad);
        const double a00 = s11 / det, a11 = s00 / det, a01 = -s01 / det;
        const double d0 = x1 - mu1, d1 = x2 - mu2;
        const double e0 = a00 * d0 + a01 * d1;
        const double e1 = a01 * d0 + a11 * d1;
        const double mdist = d0 * e0 + d1 * e1;
        const double gauss = std::exp(-0.5 * mdist) / (kTwoPi * std::sqrt(det));
        const double integral = integral_scale * gauss;

        const double f = -data_term + integral;
        if (!std::isfinite(f)) return bail(grad);
        if (grad == nullptr) return f;

        // Data-term gradient in natural coordinates.
        const double dd_mu1 = (su - rho * sv) / (s1 * omr) / m.n;
        const double dd_mu2 = (sv - rho * su) / (s2 * omr) / m.n;
        const double dd_s1 = ((su2 - rho * suv) / omr - m.w) / s1 / m.n;
        const double dd_s2 = ((sv2 - rho * suv) / omr - m.w) / s2 / m.n;
        const double dd_rho =
            (rho / omr * m.w - (rho * (su2 + sv2) - (1.0 + rho * rho) * suv) / (omr * omr)) / m.n;

        // Integral-term gradient via d log N2 / d theta.
        const double di_mu1 = integral * e0;
        const double di_mu2 = integral * e1;
        const double tr1 = 2.0 * s1 * a00 + 2.0 * rho * s2 * a01;
        const double q1 = 2.0 * s1 * e0 * e0 + 2.0 * rho * s2 * e0 * e1;
        const double di_s1 = integral * 0.5 * (q1 - tr1);
        const double tr2 = 2.0 * rho * s1 * a01 + 2.0 * s2 * a11;
        const double q2 = 2.0 * rho * s1 * e0 * e1 + 2.0 * s2 * e1 * e1;
        const double di_s2 = integral * 0.5 * (q2 - tr2);
        const double di_rho = integral * s1 * s2 * (e0 * e1 - a01);

        grad->resize(5);
        (*grad)[0] = -dd_mu1 + di_mu1;
        (*grad)[1] = -dd_mu2 + di_mu2;
        (*grad)[2] = s1 * (-dd_s1 + di_s1);
        (*grad)[3] = s2 * (-dd_s2 + di_s2);
        (*grad)[4] = omr * (-dd_rho + di_rho);
        return f;
    }

  private:
    static double bail(Eigen::VectorXd* grad) {
        if (grad != nullptr) grad->setConstant(5, std::numeric_limits<double>::quiet_NaN());
        return kInf;
    }
};

LocalFit run_local_fit(const Moments& m, double x1, double x2, const Bandwidths& bw,
                       const LocalFit* init) {
    LocalObjective obj;
    obj.m = m;
    obj.x1 = x1;
    obj.x2 = x2;
    obj.b1sq = bw.b1 * bw.b1;
    obj.b2sq = bw.b2 * bw.b2;
    obj.integral_scale = kTwoPi * bw.b1 * bw.b2;

    LocalFit out;
    out.mass = m.w / m.n;
    out.weight = 1.0;

    // Start at the local weighted moments unless a warm start is supplied.
    double mu1 = m.sa / m.w;
    double mu2 = m.sb / m.w;
    double var1 = m.saa / m.w - mu1 * mu1;
    double var2 = m.sbb / m.w - mu2 * mu2;
    double cov = m.sab / m.w - mu1 * mu2;
    if (!(var1 > 0.0) || !(var2 > 0.0)) {
        out.converged = false;
        out.mu1 = mu1;
        out.mu2 = mu2;
        return out;
    }
    double rho = cov / std::sqrt(var1 * var2);
    rho = std::clamp(rho, -0.9, 0.9);

    Eigen::VectorXd w0(5);
    if (init != nullptr && init->converged) {
        w0 << init->mu1, init->mu2, std::log(init->sigma1), std::log(init->sigma2),
            std::atanh(std::clamp(init->rho, -0.999, 0.999));
    } else {
        w0 << mu1, mu2, 0.5 * std::log(var1), 0.5 * std::log(var2), std::atanh(rho);
    }

    optim::Options opts;
    opts.max_iter = 250;
    opts.grad_tol = 1e-7;
    opts.rel_f_tol = 5e-13;
    optim::Result res;
    try {
        res = optim::minimize(std::cref(obj), w0, opts);
    } catch (const NumericalError&) {
        // Warm start landed in a bad region; retry from the moment start.
        if (init != nullptr) {
            w0 << mu1, mu2, 0.5 * std::log(var1), 0.5 * std::log(var2), std::atanh(rho);
            try {
                res = optim::minimize(std::cref(obj), w0, opts);
            } catch (const NumericalError&) {
                out.converged = false;
                return out;
            }
        } else {
            out.converged = false;
            return out;
        }
    }

    out.mu1 = res.x[0];
    out.mu2 = res.x[1];
    out.sigma1 = std::exp(res.x[2]);
    out.sigma2 = std::exp(res.x[3]);
    out.rho = std::tanh(res.x[4]);
    out.converged = res.converged && std::isfinite(out.mu1) && std::isfinite(out.mu2) &&
                    std::isfinite(out.sigma1) && std::isfinite(out.sigma2) &&
                    std::isfinite(out.rho);
    return out;
}

Moments gather_moments(std::span<const double> a, std::span<const double> b, double x1, double x2,
                       const Bandwidths& bw) {
    Moments m;
    m.n = static_cast<double>(a.size());
    const double inv2b1 = 1.0 / (2.0 * bw.b1 * bw.b1);
    const double inv2b2 = 1.0 / (2.0 * bw.b2 * bw.b2);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - x1;
        const double db = b[i] - x2;
        const double w = std::exp(-da * da * inv2b1 - db * db * inv2b2);
        m.w += w;
        m.sa += w * a[i];
        m.sb += w * b[i];
        m.saa += w * a[i] * a[i];
        m.sbb += w * b[i] * b[i];
        m.sab += w * a[i] * b[i];
    }
    return m;
}

}  // namespace

bool LgcGrid::same_as(const LgcGrid& other) const {
    return x == other.x && y == other.y;
}

LgcGrid make_grid(std::span<const double> a, std::span<const double> b, const GridSpec& spec) {
    validate_sample(a, b);
    if (spec.n < 2) throw ValidationError("lgc grid: need at least 2 points per axis");
    if (!(spec.lo_pct >= 0.0 && spec.lo_pct < spec.hi_pct && spec.hi_pct <= 1.0))
        throw ValidationError("lgc grid: percentile range must satisfy 0 <= lo < hi <= 1");
    LgcGrid g;
    auto axis = [&](std::span<const double> v) {
        std::vector<double> sorted(v.begin(), v.end());
        std::sort(sorted.begin(), sorted.end());
        const double lo = stats::quantile_sorted(sorted, spec.lo_pct);
        const double hi = stats::quantile_sorted(sorted, spec.hi_pct);
        if (!(hi > lo)) throw ValidationError("lgc grid: degenerate percentile range");
        std::vector<double> pts(static_cast<std::size_t>(spec.n));
        for (int i = 0; i < spec.n; ++i)
            pts[static_cast<std::size_t>(i)] =
                lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(spec.n - 1);
        return pts;
    };
    g.x = axis(a);
    g.y = axis(b);
    return g;
}

Bandwidths resolve_bandwidths(std::span<const double> a, std::span<const double> b,
                              const BandwidthSpec& spec) {
    validate_sample(a, b);
    Bandwidths bw;
    if (spec.b1.has_value())
        bw.b1 = *spec.b1;
    else {
        if (!(spec.factor > 0.0)) throw ValidationError("lgc: bandwidth factor must be positive");
        bw.b1 = spec.factor * stats::sd(a);
    }
    if (spec.b2.has_value())
        bw.b2 = *spec.b2;
    else {
        if (!(spec.factor > 0.0)) throw ValidationError("lgc: bandwidth factor must be positive");
        bw.b2 = spec.factor * stats::sd(b);
    }
    validate_bandwidths(bw);
    return bw;
}

double local_integral_term(double x1, double x2, const Bandwidths& bw, double mu1, double mu2,
                           double sigma1, double sigma2, double rho) {
    validate_bandwidths(bw);
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0) || !(std::fabs(rho) < 1.0))
        throw ValidationError("lgc: invalid local parameters");
    const double s00 = sigma1 * sigma1 + bw.b1 * bw.b1;
    const double s11 = sigma2 * sigma2 + bw.b2 * bw.b2;
    const double s01 = rho * sigma1 * sigma2;
    const double det = s00 * s11 - s01 * s01;
    const double d0 = x1 - mu1, d1 = x2 - mu2;
    const double mdist = (s11 * d0 * d0 - 2.0 * s01 * d0 * d1 + s00 * d1 * d1) / det;
    return kTwoPi * bw.b1 * bw.b2 * std::exp(-0.5 * mdist) / (kTwoPi * std::sqrt(det));
}

double local_loglik(std::span<const double> a, std::span<const double> b, double x1, double x2,
                    const Bandwidths& bw, double mu1, double mu2, double sigma1, double sigma2,
                    double rho) {
    validate_sample(a, b);
    validate_bandwidths(bw);
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0) || !(std::fabs(rho) < 1.0))
        throw ValidationError("lgc: invalid local parameters");
    // Direct O(n) evaluation, kept independent of the moment-based fast path.
    const double inv2b1 = 1.0 / (2.0 * bw.b1 * bw.b1);
    const double inv2b2 = 1.0 / (2.0 * bw.b2 * bw.b2);
    const double omr = 1.0 - rho * rho;
    const double log_norm =
        -std::log(kTwoPi) - std::log(sigma1) - std::log(sigma2) - 0.5 * std::log(omr);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - x1;
        const double db = b[i] - x2;
        const double w = std::exp(-da * da * inv2b1 - db * db * inv2b2);
        const double u = (a[i] - mu1) / sigma1;
        const double v = (b[i] - mu2) / sigma2;
        const double q = (u * u - 2.0 * rho * u * v + v * v) / omr;
        acc += w * (log_norm - 0.5 * q);
    }
    return acc / static_cast<double>(a.size()) -
           local_integral_term(x1, x2, bw, mu1, mu2, sigma1, sigma2, rho);
}

LocalFit fit_local_gaussian(std::span<const double> a, std::span<const double> b, double x1,
                            double x2, const Bandwidths& bw, const LocalFit* init) {
    validate_sample(a, b);
    validate_bandwidths(bw);
    const Moments m = gather_moments(a, b, x1, x2, bw);
    if (!(m.w > 0.0)) {
        LocalFit dead;
        dead.weight = 0.0;
        dead.mass = 0.0;
        return dead;
    }
    return run_local_fit(m, x1, x2, bw, init);
}

LgcMap estimate_map(std::span<const double> a, std::span<const double> b, const LgcGrid& grid,
                    const Bandwidths& bw, const LgcMap* warm, double mass_floor) {
    validate_sample(a, b);
    validate_bandwidths(bw);
    const std::size_t nx = grid.x.size();
    const std::size_t ny = grid.y.size();
    if (nx == 0 || ny == 0) throw ValidationError("lgc: empty grid");
    if (warm != nullptr && !warm->grid.same_as(grid))
        throw ValidationError("lgc: warm-start map has a different grid");

    const std::size_t n = a.size();
    LgcMap map;
    map.grid = grid;
    map.bandwidths = bw;
    map.n_obs = n;
    map.fits.assign(nx * ny, LocalFit{});

    // Separable kernel tables: one exp per (observation, axis point).
    std::vector<double> ea(n * nx), eb(n * ny);
    const double inv2b1 = 1.0 / (2.0 * bw.b1 * bw.b1);
    const double inv2b2 = 1.0 / (2.0 * bw.b2 * bw.b2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ix = 0; ix < nx; ++ix) {
            const double d = a[i] - grid.x[ix];
            ea[i * nx + ix] = std::exp(-d * d * inv2b1);
        }
        for (std::size_t iy = 0; iy < ny; ++iy) {
            const double d = b[i] - grid.y[iy];
            eb[i * ny + iy] = std::exp(-d * d * inv2b2);
        }
    }

    for (std::size_t ix = 0; ix < nx; ++ix) {
        for (std::size_t iy = 0; iy < ny; ++iy) {
            Moments m;
            m.n = static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double w = ea[i * nx + ix] * eb[i * ny + iy];
                m.w += w;
                m.sa += w * a[i];
                m.sb += w * b[i];
                m.saa += w * a[i] * a[i];
                m.sbb += w * b[i] * b[i];
                m.sab += w * a[i] * b[i];
            }
            LocalFit& slot = map.fits[ix * ny + iy];
            if (!(m.w / m.n >= mass_floor)) {
                slot.weight = 0.0;
                slot.mass = m.w / m.n;
                slot.converged = false;
                continue;
            }
            const LocalFit* seed = nullptr;
            if (warm != nullptr && warm->fits[ix * ny + iy].converged) {
                seed = &warm->fits[ix * ny + iy];
            } else if (iy > 0 && map.fits[ix * ny + iy - 1].converged) {
                seed = &map.fits[ix * ny + iy - 1];
            } else if (ix > 0 && map.fits[(ix - 1) * ny + iy].converged) {
                seed = &map.fits[(ix - 1) * ny + iy];
            }
            slot = run_local_fit(m, grid.x[ix], grid.y[iy], bw, seed);
        }
    }
    return map;
}

std::string map_to_csv(const LgcMap& map) {
    std::ostringstream out;
    out << "x,y,mu1,mu2,sigma1,sigma2,rho,converged,weight\n";
    const std::size_t ny = map.grid.y.size();
    for (std::size_t ix = 0; ix < map.grid.x.size(); ++ix) {
        for (std::size_t iy = 0; iy < ny; ++iy) {
            const LocalFit& f = map.fits[ix * ny + iy];
            out << format_double(map.grid.x[ix]) << ',' << format_double(map.grid.y[iy]) << ','
                << format_double(f.mu1) << ',' << format_double(f.mu2) << ','
                << format_double(f.sigma1) << ',' << format_double(f.sigma2) << ','
                << format_double(f.rho) << ',' << (f.converged ? 1 : 0) << ','
                << format_double(f.weight) << '\n';
        }
    }
    return out.str();
}

std::string map_to_json(const LgcMap& map) {
    nlohmann::json fits = nlohmann::json::array();
    const std::size_t ny = map.grid.y.size();
    for (std::size_t ix = 0; ix < map.grid.x.size(); ++ix) {
        for (std::size_t iy = 0; iy < ny; ++iy) {
            const LocalFit& f = map.fits[ix * ny + iy];
            fits.push_back({{"x", map.grid.x[ix]},
                            {"y", map.grid.y[iy]},
                            {"mu1", f.mu1},
                            {"mu2", f.mu2},
                            {"sigma1", f.sigma1},
                            {"sigma2", f.sigma2},
                            {"rho", f.rho},
                            {"converged", f.converged},
                            {"weight", f.weight},
                            {"mass", f.mass}});
        }
    }
    nlohmann::json j{{"grid_x", map.grid.x},
                     {"grid_y", map.grid.y},
                     {"bandwidth_1", map.bandwidths.b1},
                     {"bandwidth_2", map.bandwidths.b2},
                     {"n_obs", map.n_obs},
                     {"fits", fits}};
    return j.dump(2) + "\n";
}

}  // namespace reglgc
