#pragma once

#include <Eigen/Dense>
#include <functional>

namespace reglgc::optim {

// Objective callback: returns f(x); when `grad` is non-null it must also be
// filled with the gradient at x. Callers that only have f use
// with_fd_gradient to supply finite-difference gradients.
using FGrad = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct Options {
    int max_iter = 500;
    double grad_tol = 1e-6;      // infinity norm of gradient
    double rel_f_tol = 1e-10;    // relative improvement between iterates
};

struct Result {
    Eigen::VectorXd x;
    double f = 0.0;
    Eigen::VectorXd grad;
    int iterations = 0;
    int n_evals = 0;
    bool converged = false;
};

// BFGS (inverse-Hessian form) with a strong-Wolfe line search. Minimizes fg.
Result minimize(const FGrad& fg, const Eigen::VectorXd& x0, const Options& opts = {});

// Central finite differences, step h_i = step * (1 + |x_i|).
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double step = 1e-6);
Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                           const Eigen::VectorXd& x, double step = 1e-4);

// Wraps an f-only objective as FGrad using fd_gradient.
FGrad with_fd_gradient(std::function<double(const Eigen::VectorXd&)> f, double step = 1e-6);

}  // namespace reglgc::optim
