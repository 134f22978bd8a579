#include "reglgc/regimetest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "reglgc/csv.hpp"
#include "reglgc/errors.hpp"
#include "reglgc/parallel.hpp"
#include "reglgc/rng.hpp"

namespace reglgc {

Correction correction_from_string(const std::string& name) {
    if (name == "none") return Correction::none;
    if (name == "bonferroni") return Correction::bonferroni;
    throw ValidationError("unknown correction '" + name + "' (expected none or bonferroni)");
}

std::string to_string(Correction c) {
    return c == Correction::none ? "none" : "bonferroni";
}

double d1_statistic(const LgcMap& map_k, const LgcMap& map_l) {
    if (!map_k.grid.same_as(map_l.grid))
        throw ValidationError("d1: maps were estimated on different grids");
    double sum = 0.0;
    std::size_t included = 0;
    for (std::size_t i = 0; i < map_k.fits.size(); ++i) {
        const LocalFit& fk = map_k.fits[i];
        const LocalFit& fl = map_l.fits[i];
        if (fk.weight <= 0.0 || fl.weight <= 0.0 || !fk.converged || !fl.converged) continue;
        const double d = fk.rho - fl.rho;
        sum += d * d;
        ++included;
    }
    if (included == 0) throw NumericalError("d1: no gridpoint usable in both maps");
    return sum / static_cast<double>(included);
}

namespace {

struct RegimeIndex {
    // Row indices of the kept (observed) rows per regime, 1-based regimes.
    std::vector<std::vector<std::size_t>> rows;
    std::vector<std::size_t> kept;  // all observed rows, in time order
    int n_regimes = 0;
};

RegimeIndex index_regimes(const ReturnSeries& data, std::size_t min_size) {
    if (!data.has_labels())
        throw ValidationError("regime test: series carries no regime labels");
    RegimeIndex idx;
    int c = 0;
    for (std::size_t t = 0; t < data.size(); ++t) {
        if (data.is_missing(t)) continue;
        c = std::max(c, data.labels[t]);
        idx.kept.push_back(t);
    }
    if (c < 1) throw ValidationError("regime test: no labeled observations");
    idx.n_regimes = c;
    idx.rows.resize(static_cast<std::size_t>(c));
    for (std::size_t t : idx.kept)
        idx.rows[static_cast<std::size_t>(data.labels[t] - 1)].push_back(t);
    for (int k = 0; k < c; ++k) {
        const auto n = idx.rows[static_cast<std::size_t>(k)].size();
        if (n < min_size)
            throw ValidationError("regime test: regime " + std::to_string(k + 1) + " has only " +
                                  std::to_string(n) + " observations (minimum " +
                                  std::to_string(min_size) + ")");
    }
    return idx;
}

}  // namespace

TestReport run_regime_test(const ReturnSeries& data, const TestConfig& cfg) {
    data.validate();
    if (cfg.n_boot < 1) throw ValidationError("regime test: n_boot must be positive");
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
        throw ValidationError("regime test: alpha must lie in (0, 1)");
    const RegimeIndex idx = index_regimes(data, cfg.min_regime_size);
    const int c = idx.n_regimes;
    const std::size_t n_kept = idx.kept.size();

    // Pooled sample drives the grid and the bandwidths, fixed thereafter.
    std::vector<double> pool_a(n_kept), pool_b(n_kept);
    for (std::size_t i = 0; i < n_kept; ++i) {
        pool_a[i] = data.a[idx.kept[i]];
        pool_b[i] = data.b[idx.kept[i]];
    }
    TestReport rep;
    rep.n_regimes = c;
    rep.alpha = cfg.alpha;
    rep.correction = cfg.correction;
    rep.n_boot = cfg.n_boot;
    rep.seed = cfg.seed;
    rep.grid = make_grid(pool_a, pool_b, cfg.grid);
    rep.bandwidths = resolve_bandwidths(pool_a, pool_b, cfg.bandwidth);

    // Observed per-regime maps.
    rep.maps.reserve(static_cast<std::size_t>(c));
    for (int k = 0; k < c; ++k) {
        std::vector<double> xa, xb;
        xa.reserve(idx.rows[static_cast<std::size_t>(k)].size());
        xb.reserve(idx.rows[static_cast<std::size_t>(k)].size());
        for (std::size_t t : idx.rows[static_cast<std::size_t>(k)]) {
            xa.push_back(data.a[t]);
            xb.push_back(data.b[t]);
        }
        rep.maps.push_back(estimate_map(xa, xb, rep.grid, rep.bandwidths));
    }

    const int n_pairs = c * (c - 1) / 2;
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<std::size_t>(n_pairs));
    for (int k = 1; k <= c; ++k)
        for (int l = k + 1; l <= c; ++l) pairs.emplace_back(k, l);

    std::vector<double> observed(static_cast<std::size_t>(n_pairs));
    for (std::size_t p = 0; p < pairs.size(); ++p)
        observed[p] = d1_statistic(rep.maps[static_cast<std::size_t>(pairs[p].first - 1)],
                                   rep.maps[static_cast<std::size_t>(pairs[p].second - 1)]);

    // Bootstrap replicates: slot t draws a pooled row, labels stay put.
    const auto b_total = n_pairs > 0 ? static_cast<std::size_t>(cfg.n_boot) : 0;
    // One row per replicate: each pair's statistic or NaN when unusable.
    std::vector<double> boot(b_total * static_cast<std::size_t>(n_pairs));
    parallel_for(
        b_total,
        [&](std::size_t r) {
            Rng rng = Rng::stream(cfg.seed, r + 1);
            std::vector<std::vector<double>> ra(static_cast<std::size_t>(c)),
                rb(static_cast<std::size_t>(c));
            for (int k = 0; k < c; ++k) {
                ra[static_cast<std::size_t>(k)].reserve(idx.rows[static_cast<std::size_t>(k)].size());
                rb[static_cast<std::size_t>(k)].reserve(idx.rows[static_cast<std::size_t>(k)].size());
            }
            for (std::size_t i = 0; i < n_kept; ++i) {
                const std::size_t j = rng.below(n_kept);
                const auto lab = static_cast<std::size_t>(data.labels[idx.kept[i]] - 1);
                ra[lab].push_back(pool_a[j]);
                rb[lab].push_back(pool_b[j]);
            }
            std::vector<LgcMap> maps;
            maps.reserve(static_cast<std::size_t>(c));
            for (int k = 0; k < c; ++k)
                maps.push_back(estimate_map(ra[static_cast<std::size_t>(k)],
                                            rb[static_cast<std::size_t>(k)], rep.grid,
                                            rep.bandwidths, &rep.maps[static_cast<std::size_t>(k)]));
            for (std::size_t p = 0; p < pairs.size(); ++p) {
                double stat;
                try {
                    stat = d1_statistic(maps[static_cast<std::size_t>(pairs[p].first - 1)],
                                        maps[static_cast<std::size_t>(pairs[p].second - 1)]);
                } catch (const NumericalError&) {
                    stat = std::numeric_limits<double>::quiet_NaN();
                }
                boot[r * static_cast<std::size_t>(n_pairs) + p] = stat;
            }
        },
        cfg.threads);

    const int m = cfg.correction == Correction::bonferroni ? std::max(n_pairs, 1) : 1;
    rep.threshold = cfg.alpha / static_cast<double>(m);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        PairTest pt;
        pt.regime_k = pairs[p].first;
        pt.regime_l = pairs[p].second;
        pt.d1 = observed[p];
        int count = 0, effective = 0;
        for (std::size_t r = 0; r < b_total; ++r) {
            const double stat = boot[r * static_cast<std::size_t>(n_pairs) + p];
            if (std::isnan(stat)) continue;
            ++effective;
            if (stat >= observed[p]) ++count;
        }
        if (effective == 0)
            throw NumericalError("regime test: no usable bootstrap replicate for pair " +
                                 std::to_string(pt.regime_k) + "-" + std::to_string(pt.regime_l));
        if (effective < cfg.n_boot)
            rep.warnings.push_back("pair " + std::to_string(pt.regime_k) + "-" +
                                   std::to_string(pt.regime_l) + ": " +
                                   std::to_string(cfg.n_boot - effective) +
                                   " bootstrap replicates discarded (no usable gridpoints)");
        pt.exceed_count = count;
        pt.n_boot_effective = effective;
        pt.p_raw = (1.0 + count) / (effective + 1.0);
        pt.p_count = static_cast<double>(count) / effective;
        pt.reject = pt.p_raw < rep.threshold;
        rep.pairs.push_back(pt);
    }
    return rep;
}

std::string test_report_to_json(const TestReport& report) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : report.pairs) {
        pairs.push_back({{"regime_k", p.regime_k},
                         {"regime_l", p.regime_l},
                         {"d1", p.d1},
                         {"exceed_count", p.exceed_count},
                         {"n_boot_effective", p.n_boot_effective},
                         {"p_raw", p.p_raw},
                         {"p_count", p.p_count},
                         {"reject", p.reject}});
    }
    nlohmann::json j{{"n_regimes", report.n_regimes},
                     {"pairs", pairs},
                     {"alpha", report.alpha},
                     {"threshold", report.threshold},
                     {"correction", to_string(report.correction)},
                     {"n_boot", report.n_boot},
                     {"seed", report.seed},
                     {"bandwidth_1", report.bandwidths.b1},
                     {"bandwidth_2", report.bandwidths.b2},
                     {"grid_x", report.grid.x},
                     {"grid_y", report.grid.y},
                     {"warnings", report.warnings}};
    return j.dump(2) + "\n";
}

std::string pvalue_matrix_csv(const TestReport& report) {
    const int c = report.n_regimes;
    std::vector<std::vector<double>> mat(static_cast<std::size_t>(c),
                                         std::vector<double>(static_cast<std::size_t>(c),
                                                             std::numeric_limits<double>::quiet_NaN()));
    for (const auto& p : report.pairs) {
        mat[static_cast<std::size_t>(p.regime_k - 1)][static_cast<std::size_t>(p.regime_l - 1)] =
            p.p_raw;
        mat[static_cast<std::size_t>(p.regime_l - 1)][static_cast<std::size_t>(p.regime_k - 1)] =
            p.p_raw;
    }
    std::ostringstream out;
    out << "regime";
    for (int k = 1; k <= c; ++k) out << ",regime_" << k;
    out << '\n';
    for (int k = 1; k <= c; ++k) {
        out << k;
        for (int l = 1; l <= c; ++l) {
            out << ',';
            if (k != l) out << format_double(mat[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(l - 1)]);
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace reglgc
