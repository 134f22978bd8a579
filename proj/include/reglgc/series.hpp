#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace reglgc {

// Aligned bivariate return series. `missing[t]` marks rows where at least
// one component is unavailable; such rows stay in place so the time index
// keeps its meaning. `labels` (1-based regime ids) may be empty.
struct ReturnSeries {
    std::vector<std::string> timestamps;  // empty or size n
    std::vector<double> a;
    std::vector<double> b;
    std::vector<int> labels;              // empty or size n
    std::vector<std::uint8_t> missing;    // empty (none missing) or size n

    std::size_t size() const { return a.size(); }
    bool is_missing(std::size_t t) const {
        return !missing.empty() && missing[t] != 0;
    }
    bool has_labels() const { return !labels.empty(); }

    // Throws ValidationError on ragged fields, non-finite observed values,
    // or non-positive labels.
    void validate() const;

    // Builds a series from raw values; non-finite entries become missing.
    static ReturnSeries from_values(std::vector<double> a, std::vector<double> b);

    // Observed (non-missing) rows only.
    std::vector<double> observed_a() const;
    std::vector<double> observed_b() const;
    std::size_t n_observed() const;
};

enum class LoadMode { prices, returns };

struct CsvColumns {
    std::string time;   // optional; empty means no timestamp column
    std::string a;
    std::string b;
    std::string label;  // optional regime label column
};

struct LoadReport {
    std::size_t rows_in = 0;       // data rows in the file
    std::size_t rows_missing = 0;  // rows flagged missing in the result
};

// Loads a bivariate series from CSV. In `prices` mode values are converted
// to log returns in percent, r_t = 100 * (log p_t - log p_{t-1}), so the
// output is one row shorter than the input. Blank or non-numeric value
// fields become missing observations.
ReturnSeries load_series_csv(const std::string& path, const CsvColumns& cols, LoadMode mode,
                             LoadReport* report = nullptr);

struct DescriptiveStats {
    std::size_t n = 0;
    double mean = 0, median = 0, min = 0, max = 0, iqr = 0;
    double variance = 0, skewness = 0, kurtosis = 0;
    double jarque_bera = 0, jb_pvalue = 0;
};

DescriptiveStats describe(std::span<const double> x);

struct GroupStats {
    std::string group;  // "all" or the label value
    DescriptiveStats a;
    DescriptiveStats b;
};

struct SummaryReport {
    std::vector<GroupStats> groups;
    std::vector<std::string> warnings;
};

// Describes both components, overall and per regime label when labels are
// present. Groups with fewer than 8 observations get a warning and are
// reported with moment fields left NaN.
SummaryReport summarize(const ReturnSeries& series);

std::string summary_to_json(const SummaryReport& report);

}  // namespace reglgc
