#include "reglgc/series.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "reglgc/csv.hpp"
#include "reglgc/errors.hpp"
#include "reglgc/stats.hpp"

namespace reglgc {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

bool parse_field(const std::string& s, double* out) {
    // Blank and NA-ish markers are missing, anything else must parse fully.
    if (s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" || s == "NULL") {
        *out = kNan;
        return true;
    }
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        return false;
    }
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
    if (pos != s.size()) return false;
    *out = v;
    return true;
}

}  // namespace

void ReturnSeries::validate() const {
    const std::size_t n = a.size();
    if (b.size() != n) throw ValidationError("series: component lengths differ");
    if (!timestamps.empty() && timestamps.size() != n)
        throw ValidationError("series: timestamp column length differs from data");
    if (!labels.empty() && labels.size() != n)
        throw ValidationError("series: label column length differs from data");
    if (!missing.empty() && missing.size() != n)
        throw ValidationError("series: missing-flag length differs from data");
    for (std::size_t t = 0; t < n; ++t) {
        if (is_missing(t)) continue;
        if (!std::isfinite(a[t]) || !std::isfinite(b[t]))
            throw ValidationError("series: non-finite value at row " + std::to_string(t) +
                                  " not flagged as missing");
    }
    for (int lab : labels) {
        if (lab < 1) throw ValidationError("series: regime labels must be positive integers");
    }
}

ReturnSeries ReturnSeries::from_values(std::vector<double> av, std::vector<double> bv) {
    if (av.size() != bv.size()) throw ValidationError("series: component lengths differ");
    ReturnSeries s;
    s.a = std::move(av);
    s.b = std::move(bv);
    bool any_missing = false;
    std::vector<std::uint8_t> miss(s.a.size(), 0);
    for (std::size_t t = 0; t < s.a.size(); ++t) {
        if (!std::isfinite(s.a[t]) || !std::isfinite(s.b[t])) {
            miss[t] = 1;
            any_missing = true;
        }
    }
    if (any_missing) s.missing = std::move(miss);
    return s;
}

std::vector<double> ReturnSeries::observed_a() const {
    std::vector<double> out;
    out.reserve(size());
    for (std::size_t t = 0; t < size(); ++t)
        if (!is_missing(t)) out.push_back(a[t]);
    return out;
}

std::vector<double> ReturnSeries::observed_b() const {
    std::vector<double> out;
    out.reserve(size());
    for (std::size_t t = 0; t < size(); ++t)
        if (!is_missing(t)) out.push_back(b[t]);
    return out;
}

std::size_t ReturnSeries::n_observed() const {
    std::size_t n = 0;
    for (std::size_t t = 0; t < size(); ++t)
        if (!is_missing(t)) ++n;
    return n;
}

ReturnSeries load_series_csv(const std::string& path, const CsvColumns& cols, LoadMode mode,
                             LoadReport* report) {
    const CsvTable table = read_csv(path);
    if (cols.a.empty() || cols.b.empty())
        throw ValidationError("load_series_csv: both value column names are required");
    const std::size_t ia = table.column(cols.a);
    const std::size_t ib = table.column(cols.b);
    const bool has_time = !cols.time.empty();
    const bool has_label = !cols.label.empty();
    const std::size_t it = has_time ? table.column(cols.time) : 0;
    const std::size_t il = has_label ? table.column(cols.label) : 0;

    const std::size_t n_rows = table.rows.size();
    if (report != nullptr) {
        report->rows_in = n_rows;
        report->rows_missing = 0;
    }

    std::vector<double> va(n_rows), vb(n_rows);
    std::vector<std::string> times;
    std::vector<int> labels;
    if (has_time) times.resize(n_rows);
    if (has_label) labels.resize(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) {
        const auto& row = table.rows[r];
        if (!parse_field(row[ia], &va[r]))
            throw ValidationError("load_series_csv: row " + std::to_string(r + 2) +
                                  ", column '" + cols.a + "': cannot parse '" + row[ia] + "'");
        if (!parse_field(row[ib], &vb[r]))
            throw ValidationError("load_series_csv: row " + std::to_string(r + 2) +
                                  ", column '" + cols.b + "': cannot parse '" + row[ib] + "'");
        if (has_time) times[r] = row[it];
        if (has_label) {
            double lv;
            if (!parse_field(row[il], &lv) || !std::isfinite(lv) || lv != std::floor(lv) || lv < 1)
                throw ValidationError("load_series_csv: row " + std::to_string(r + 2) +
                                      ": regime label must be a positive integer");
            labels[r] = static_cast<int>(lv);
        }
    }

    ReturnSeries out;
    if (mode == LoadMode::returns) {
        out = ReturnSeries::from_values(std::move(va), std::move(vb));
        out.timestamps = std::move(times);
        out.labels = std::move(labels);
    } else {
        if (n_rows < 2) throw ValidationError("load_series_csv: need at least 2 price rows");
        for (std::size_t r = 0; r < n_rows; ++r) {
            if (std::isfinite(va[r]) && va[r] <= 0.0)
                throw ValidationError("load_series_csv: non-positive price at row " +
                                      std::to_string(r + 2));
            if (std::isfinite(vb[r]) && vb[r] <= 0.0)
                throw ValidationError("load_series_csv: non-positive price at row " +
                                      std::to_string(r + 2));
        }
        std::vector<double> ra(n_rows - 1), rb(n_rows - 1);
        for (std::size_t r = 0; r + 1 < n_rows; ++r) {
            ra[r] = 100.0 * (std::log(va[r + 1]) - std::log(va[r]));
            rb[r] = 100.0 * (std::log(vb[r + 1]) - std::log(vb[r]));
        }
        out = ReturnSeries::from_values(std::move(ra), std::move(rb));
        // Returns are stamped with the end of their interval.
        if (has_time) out.timestamps.assign(times.begin() + 1, times.end());
        if (has_label) out.labels.assign(labels.begin() + 1, labels.end());
    }
    if (report != nullptr) report->rows_missing = out.size() - out.n_observed();
    out.validate();
    return out;
}

DescriptiveStats describe(std::span<const double> x) {
    if (x.size() < 2) throw ValidationError("describe: need at least 2 observations");
    DescriptiveStats d;
    d.n = x.size();
    d.mean = stats::mean(x);
    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    d.median = stats::quantile_sorted(sorted, 0.5);
    d.min = sorted.front();
    d.max = sorted.back();
    d.iqr = stats::quantile_sorted(sorted, 0.75) - stats::quantile_sorted(sorted, 0.25);
    d.variance = stats::variance(x);
    d.skewness = stats::skewness(x);
    d.kurtosis = stats::kurtosis(x);
    d.jarque_bera = stats::jarque_bera(x);
    d.jb_pvalue = 1.0 - stats::chi2_cdf(d.jarque_bera, 2.0);
    return d;
}

namespace {

DescriptiveStats describe_or_partial(const std::vector<double>& x) {
    if (x.size() >= 8) return describe(x);
    DescriptiveStats d;
    d.n = x.size();
    d.mean = x.empty() ? kNan : stats::mean(x);
    d.median = x.empty() ? kNan : stats::median(x);
    d.min = x.empty() ? kNan : stats::min(x);
    d.max = x.empty() ? kNan : stats::max(x);
    d.iqr = x.empty() ? kNan : stats::iqr(x);
    d.variance = kNan;
    d.skewness = kNan;
    d.kurtosis = kNan;
    d.jarque_bera = kNan;
    d.jb_pvalue = kNan;
    return d;
}

}  // namespace

SummaryReport summarize(const ReturnSeries& series) {
    series.validate();
    SummaryReport rep;
    const auto all_a = series.observed_a();
    const auto all_b = series.observed_b();
    if (all_a.size() < 8)
        throw ValidationError("summarize: need at least 8 observed rows");
    rep.groups.push_back({"all", describe(all_a), describe(all_b)});

    if (series.has_labels()) {
        int max_label = 0;
        for (std::size_t t = 0; t < series.size(); ++t)
            if (!series.is_missing(t)) max_label = std::max(max_label, series.labels[t]);
        for (int lab = 1; lab <= max_label; ++lab) {
            std::vector<double> ga, gb;
            for (std::size_t t = 0; t < series.size(); ++t) {
                if (series.is_missing(t) || series.labels[t] != lab) continue;
                ga.push_back(series.a[t]);
                gb.push_back(series.b[t]);
            }
            if (ga.size() < 8) {
                rep.warnings.push_back("regime " + std::to_string(lab) + " has only " +
                                       std::to_string(ga.size()) +
                                       " observations; moment statistics suppressed");
            }
            rep.groups.push_back(
                {std::to_string(lab), describe_or_partial(ga), describe_or_partial(gb)});
        }
    }
    return rep;
}

namespace {

nlohmann::json stats_to_json(const DescriptiveStats& d) {
    auto num = [](double v) -> nlohmann::json {
        if (std::isnan(v)) return nullptr;
        return v;
    };
    return {{"n", d.n},           {"mean", num(d.mean)},         {"median", num(d.median)},
            {"min", num(d.min)},  {"max", num(d.max)},           {"iqr", num(d.iqr)},
            {"variance", num(d.variance)}, {"skewness", num(d.skewness)},
            {"kurtosis", num(d.kurtosis)}, {"jarque_bera", num(d.jarque_bera)},
            {"jb_pvalue", num(d.jb_pvalue)}};
}

}  // namespace

std::string summary_to_json(const SummaryReport& report) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : report.groups) {
        groups.push_back({{"group", g.group}, {"a", stats_to_json(g.a)}, {"b", stats_to_json(g.b)}});
    }
    nlohmann::json j{{"groups", groups}, {"warnings", report.warnings}};
    return j.dump(2) + "\n";
}

}  // namespace reglgc
