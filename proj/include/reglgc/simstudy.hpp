#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "reglgc/copula.hpp"
#include "reglgc/regimetest.hpp"

namespace reglgc {

// Two-regime study with known labels: regime 1 contributes `size1`
// observations, regime 2 `size2`. A level study uses the same DGP twice,
// a power study two different ones.
struct TwoRegimeDesign {
    CopulaSpec regime1;
    CopulaSpec regime2;
    std::size_t size1 = 300;
    std::size_t size2 = 100;
    int n_datasets = 500;
    int n_boot = 500;
    std::vector<double> levels = {0.01, 0.05, 0.10};
    GridSpec grid;
    BandwidthSpec bandwidth;
    double max_fail_fraction = 0.10;
    std::uint64_t seed = 1;
    int threads = 0;
};

struct RejectionRate {
    double alpha = 0.0;
    int rejections = 0;
    int n = 0;          // effective datasets
    double rate = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;  // Clopper-Pearson 95%
};

struct TwoRegimeStudyResult {
    std::vector<RejectionRate> rates;
    int n_datasets = 0;  // requested
    int n_effective = 0;
    int failed = 0;
};

TwoRegimeStudyResult run_two_regime_study(const TwoRegimeDesign& design);

// Misclassification study: a latent two-state chain switches between the
// regime DGPs; the test runs once with the true labels and once with
// labels decoded from a fitted two-state HMM.
struct MisclassificationDesign {
    CopulaSpec regime1;   // should be the lower-variance regime
    CopulaSpec regime2;
    std::size_t n_obs = 500;
    Eigen::Matrix2d tpm;  // latent chain transition matrix
    int n_datasets = 200;
    int n_boot = 200;
    std::vector<double> levels = {0.01, 0.05, 0.10};
    GridSpec grid;
    BandwidthSpec bandwidth;
    // Default is a single fit from the deterministic start. Multistart picks
    // the global optimum, and on misspecified regimes that optimum is often a
    // degenerate state holding a handful of extreme points; one neutral start
    // matches how such classifiers are fit in practice.
    int hmm_restarts = 0;
    double max_fail_fraction = 0.10;
    std::uint64_t seed = 2;
    int threads = 0;
};

struct MisclassificationResult {
    // Joint true/predicted fractions over all time points of effective
    // datasets; row = true regime, column = predicted regime.
    Eigen::Matrix2d confusion;
    double accuracy = 0.0;
    std::vector<RejectionRate> true_label_rates;
    std::vector<RejectionRate> predicted_label_rates;
    int n_datasets = 0;
    int n_effective = 0;
    int failed = 0;
};

MisclassificationResult run_misclassification_study(const MisclassificationDesign& design);

std::string two_regime_result_to_json(const TwoRegimeStudyResult& result,
                                      const TwoRegimeDesign& design, const std::string& kind);
std::string misclassification_result_to_json(const MisclassificationResult& result,
                                             const MisclassificationDesign& design);
std::string rates_to_csv(const std::vector<RejectionRate>& rates, const std::string& label);

}  // namespace reglgc
