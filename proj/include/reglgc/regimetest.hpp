#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reglgc/lgc.hpp"
#include "reglgc/series.hpp"

namespace reglgc {

enum class Correction { none, bonferroni };

Correction correction_from_string(const std::string& name);
std::string to_string(Correction c);

struct TestConfig {
    int n_boot = 1000;
    double alpha = 0.05;
    Correction correction = Correction::bonferroni;
    GridSpec grid;
    BandwidthSpec bandwidth;
    std::uint64_t seed = 0x7e57;
    int threads = 0;
    std::size_t min_regime_size = 20;
};

struct PairTest {
    int regime_k = 0, regime_l = 0;  // 1-based
    double d1 = 0.0;
    int exceed_count = 0;     // bootstrap replicates with D1* >= observed D1
    int n_boot_effective = 0; // replicates that produced a statistic
    double p_raw = 0.0;       // (1 + count) / (B + 1)
    double p_count = 0.0;     // count / B
    bool reject = false;
};

struct TestReport {
    int n_regimes = 0;
    std::vector<PairTest> pairs;
    double alpha = 0.0;
    double threshold = 0.0;  // per-pair rejection threshold after correction
    Correction correction = Correction::bonferroni;
    int n_boot = 0;
    std::uint64_t seed = 0;
    Bandwidths bandwidths;
    LgcGrid grid;
    std::vector<LgcMap> maps;  // observed map per regime, index = regime - 1
    std::vector<std::string> warnings;
};

// Mean squared difference of local correlations over the gridpoints that
// are unmasked and converged in both maps. Grids must match exactly.
double d1_statistic(const LgcMap& map_k, const LgcMap& map_l);

// Bootstrap test for equal dependence structure across labeled regimes.
// Pooled resampling: every time slot draws from the pooled sample while
// keeping its original regime label; grid and bandwidths come from the
// pooled original sample and stay fixed across replicates.
TestReport run_regime_test(const ReturnSeries& data, const TestConfig& cfg);

std::string test_report_to_json(const TestReport& report);
// Symmetric regime-by-regime matrix of raw p-values (diagonal empty).
std::string pvalue_matrix_csv(const TestReport& report);

}  // namespace reglgc
