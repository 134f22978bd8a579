#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "reglgc/series.hpp"

namespace reglgc {

// C-state HMM with bivariate Gaussian state densities. `tpm` is
// row-stochastic; `initial` is the distribution of the first state.
struct HmmModel {
    int n_regimes = 0;
    std::vector<Eigen::Vector2d> means;
    std::vector<Eigen::Matrix2d> covariances;
    Eigen::MatrixXd tpm;
    Eigen::VectorXd initial;

    void validate() const;
};

struct HmmOptions {
    int restarts = 5;        // k-means starts beyond the first
    int max_iter = 500;
    double grad_tol = 1e-6;
    double rel_f_tol = 1e-10;
    bool estimate_initial = false;  // default ties initial to the stationary law
    bool standard_errors = false;
    std::uint64_t seed = 0x517a;
    int threads = 0;  // restart-level parallelism
};

struct HmmFit {
    HmmModel model;
    double loglik = 0.0;
    int n_params = 0;
    double aic = 0.0, bic = 0.0;
    bool converged = false;
    bool initial_estimated = false;

    // Natural-parameter table (delta-method standard errors when requested).
    std::vector<std::string> param_names;
    std::vector<double> estimates;
    std::vector<double> std_errors;
    bool se_valid = false;

    std::vector<std::string> warnings;
};

struct HmmSmoothing {
    Eigen::MatrixXd prob;     // T x C smoothing probabilities; NaN-free
    std::vector<int> labels;  // 1-based local decoding, ties to lowest index
};

// Log-likelihood by the scaled forward recursion. Missing rows contribute a
// unit density in every state.
double hmm_loglik(const HmmModel& model, const ReturnSeries& data);

// Same quantity through the backward recursion; kept as an independent
// route for cross-checking.
double hmm_loglik_backward(const HmmModel& model, const ReturnSeries& data);

HmmSmoothing hmm_smooth(const HmmModel& model, const ReturnSeries& data);

HmmFit fit_hmm(const ReturnSeries& data, int n_regimes, const HmmOptions& opts = {});

// Unique stationary distribution of a row-stochastic matrix.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& tpm);

// Draws a path and observations; states (1-based) go to the series labels
// and optionally to *states.
ReturnSeries simulate_hmm(const HmmModel& model, std::size_t n, std::uint64_t seed,
                          std::vector<int>* states = nullptr);

std::string hmm_to_json(const HmmFit& fit);

// Unconstrained working parametrization (means raw, covariances
// log-Cholesky, transition rows in log-ratio-to-diagonal coordinates,
// optional initial law in log-ratio-to-first coordinates). Exposed so the
// round-trip can be exercised directly.
namespace hmm_param {

int count(int n_regimes, bool include_initial);
Eigen::VectorXd pack(const HmmModel& model, bool include_initial);
HmmModel unpack(const Eigen::VectorXd& w, int n_regimes, bool include_initial);

}  // namespace hmm_param

}  // namespace reglgc
