#include "reglgc/optim.hpp"

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "reglgc/errors.hpp"

namespace reglgc::optim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct LineSearchFn {
    const FGrad& fg;
    const Eigen::VectorXd& x;
    const Eigen::VectorXd& p;
    int* n_evals;

    // phi(a) = f(x + a p); fills xa/ga, returns (phi, dphi).
    std::pair<double, double> eval(double a, Eigen::VectorXd& xa, Eigen::VectorXd& ga) const {
        xa = x + a * p;
        ++*n_evals;
        const double fa = fg(xa, &ga);
        if (!std::isfinite(fa)) return {kInf, kInf};
        return {fa, ga.dot(p)};
    }
};

// Safeguarded interpolation inside [lo, hi].
double interp_step(double lo, double hi) {
    return lo + 0.5 * (hi - lo);
}

struct WolfeResult {
    double alpha = 0.0;
    double f = kInf;
    Eigen::VectorXd x, g;
    bool ok = false;
};

// Strong Wolfe line search (Nocedal & Wright alg. 3.5/3.6, bisection zoom).
WolfeResult line_search(const LineSearchFn& fn, double f0, double dphi0) {
    constexpr double c1 = 1e-4;
    constexpr double c2 = 0.9;
    constexpr int max_outer = 20;
    constexpr int max_zoom = 30;

    WolfeResult out;
    Eigen::VectorXd xa, ga;

    double a_prev = 0.0, f_prev = f0, d_prev = dphi0;
    double a = 1.0;

    auto zoom = [&](double a_lo, double f_lo, double d_lo, double a_hi) -> bool {
        for (int j = 0; j < max_zoom; ++j) {
            const double aj = interp_step(a_lo, a_hi);
            auto [fj, dj] = fn.eval(aj, xa, ga);
            if (fj > f0 + c1 * aj * dphi0 || fj >= f_lo) {
                a_hi = aj;
            } else {
                if (std::fabs(dj) <= -c2 * dphi0) {
                    out.alpha = aj;
                    out.f = fj;
                    out.x = xa;
                    out.g = ga;
                    out.ok = true;
                    return true;
                }
                if (dj * (a_hi - a_lo) >= 0.0) a_hi = a_lo;
                a_lo = aj;
                f_lo = fj;
                d_lo = dj;
            }
            if (std::fabs(a_hi - a_lo) < 1e-16 * (1.0 + std::fabs(a_lo))) break;
        }
        // Zoom exhausted; accept the best sufficient-decrease point if any.
        if (f_lo < f0 && a_lo > 0.0) {
            auto [fl, dl] = fn.eval(a_lo, xa, ga);
            (void)dl;
            if (fl <= f_lo + 1e-12 * (1.0 + std::fabs(f_lo))) {
                out.alpha = a_lo;
                out.f = fl;
                out.x = xa;
                out.g = ga;
                out.ok = true;
                return true;
            }
        }
        return false;
    };

    for (int i = 0; i < max_outer; ++i) {
        auto [fa, da] = fn.eval(a, xa, ga);
        if (fa > f0 + c1 * a * dphi0 || (i > 0 && fa >= f_prev) || !std::isfinite(fa)) {
            if (zoom(a_prev, f_prev, d_prev, a)) return out;
            return out;
        }
        if (std::fabs(da) <= -c2 * dphi0) {
            out.alpha = a;
            out.f = fa;
            out.x = xa;
            out.g = ga;
            out.ok = true;
            return out;
        }
        if (da >= 0.0) {
            if (zoom(a, fa, da, a_prev)) return out;
            return out;
        }
        a_prev = a;
        f_prev = fa;
        d_prev = da;
        a = std::min(2.0 * a, 1e6);
    }
    return out;
}

}  // namespace

Result minimize(const FGrad& fg, const Eigen::VectorXd& x0, const Options& opts) {
    const auto n = x0.size();
    Result res;
    res.x = x0;
    res.grad.resize(n);
    res.f = fg(res.x, &res.grad);
    res.n_evals = 1;
    if (!std::isfinite(res.f))
        throw NumericalError("optim: objective not finite at the initial point");

    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
    bool reset_since_fail = false;

    for (res.iterations = 0; res.iterations < opts.max_iter; ++res.iterations) {
        if (res.grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
            res.converged = true;
            return res;
        }

        Eigen::VectorXd p = -(h * res.grad);
        double dphi0 = p.dot(res.grad);
        if (!(dphi0 < 0.0)) {
            // Curvature information went bad; restart from steepest descent.
            h.setIdentity();
            p = -res.grad;
            dphi0 = p.dot(res.grad);
        }

        LineSearchFn fn{fg, res.x, p, &res.n_evals};
        WolfeResult step = line_search(fn, res.f, dphi0);
        if (!step.ok) {
            if (!reset_since_fail) {
                // One retry with a fresh Hessian before giving up.
                reset_since_fail = true;
                h.setIdentity();
                continue;
            }
            return res;  // converged stays false
        }
        reset_since_fail = false;

        const Eigen::VectorXd s = step.x - res.x;
        const Eigen::VectorXd y = step.g - res.grad;
        const double sy = s.dot(y);
        if (sy > 1e-10 * s.norm() * y.norm()) {
            if (res.iterations == 0) {
                // Scale the initial inverse Hessian (Nocedal & Wright 6.20).
                h *= sy / y.squaredNorm();
            }
            const double rho = 1.0 / sy;
            const Eigen::VectorXd hy = h * y;
            // H <- (I - rho s y') H (I - rho y s') + rho s s'
            h -= rho * (s * hy.transpose() + hy * s.transpose());
            h += rho * (rho * y.dot(hy) + 1.0) * (s * s.transpose());
        }

        const double improvement = res.f - step.f;
        const bool f_converged =
            std::fabs(improvement) <= opts.rel_f_tol * (std::fabs(res.f) + std::fabs(step.f) + 1e-12);
        res.x = step.x;
        res.f = step.f;
        res.grad = step.g;
        if (f_converged) {
            res.converged = true;
            return res;
        }
    }
    // Iteration cap reached; report convergence state by gradient norm.
    res.converged = res.grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol;
    return res;
}

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double step) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = step * (1.0 + std::fabs(x[i]));
        const double orig = xp[i];
        xp[i] = orig + h;
        const double fp = f(xp);
        xp[i] = orig - h;
        const double fm = f(xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                           const Eigen::VectorXd& x, double step) {
    const Eigen::Index n = x.size();
    Eigen::MatrixXd hess(n, n);
    Eigen::VectorXd xp = x;
    const double f0 = f(x);
    std::vector<double> h(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) h[static_cast<std::size_t>(i)] = step * (1.0 + std::fabs(x[i]));

    for (Eigen::Index i = 0; i < n; ++i) {
        const double hi = h[static_cast<std::size_t>(i)];
        const double orig = xp[i];
        xp[i] = orig + hi;
        const double fp = f(xp);
        xp[i] = orig - hi;
        const double fm = f(xp);
        xp[i] = orig;
        hess(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double hi = h[static_cast<std::size_t>(i)];
            const double hj = h[static_cast<std::size_t>(j)];
            const double oi = xp[i], oj = xp[j];
            xp[i] = oi + hi;
            xp[j] = oj + hj;
            const double fpp = f(xp);
            xp[j] = oj - hj;
            const double fpm = f(xp);
            xp[i] = oi - hi;
            xp[j] = oj + hj;
            const double fmp = f(xp);
            xp[j] = oj - hj;
            const double fmm = f(xp);
            xp[i] = oi;
            xp[j] = oj;
            hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
        }
    }
    return hess;
}

FGrad with_fd_gradient(std::function<double(const Eigen::VectorXd&)> f, double step) {
    return [f = std::move(f), step](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
        const double fx = f(x);
        if (grad != nullptr) {
            if (std::isfinite(fx)) {
                *grad = fd_gradient(f, x, step);
            } else {
                // Line search rejects this point on f alone; skip the stencil.
                grad->setConstant(x.size(), std::numeric_limits<double>::quiet_NaN());
            }
        }
        return fx;
    };
}

}  // namespace reglgc::optim
