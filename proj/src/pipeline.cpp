#include "reglgc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <sstream>

#include <nlohmann/json.hpp>

#include "reglgc/copula.hpp"
#include "reglgc/csv.hpp"
#include "reglgc/errors.hpp"
#include "reglgc/garch.hpp"
#include "reglgc/hmm.hpp"
#include "reglgc/regimetest.hpp"
#include "reglgc/series.hpp"
#include "reglgc/sha256.hpp"
#include "reglgc/simstudy.hpp"

namespace reglgc {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

}  // namespace

KvConfig KvConfig::parse(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config line " + std::to_string(lineno) +
                                  ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
        cfg.kv_[key] = value;
    }
    return cfg;
}

bool KvConfig::has(const std::string& key) const {
    return kv_.count(key) != 0;
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

std::string KvConfig::require_string(const std::string& key) const {
    const auto it = kv_.find(key);
    if (it == kv_.end() || it->second.empty())
        throw ValidationError("config: missing required key '" + key + "'");
    return it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config: key '" + key + "' is not a number: '" + it->second + "'");
    }
}

int KvConfig::get_int(const std::string& key, int fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const long v = std::stol(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return static_cast<int>(v);
    } catch (const std::exception&) {
        throw ValidationError("config: key '" + key + "' is not an integer: '" + it->second + "'");
    }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ValidationError("config: key '" + key + "' is not a boolean: '" + v + "'");
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config: key '" + key + "' is not an unsigned integer: '" +
                              it->second + "'");
    }
}

std::vector<double> KvConfig::get_double_list(const std::string& key,
                                              const std::vector<double>& fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<double> out;
    std::istringstream in(it->second);
    std::string part;
    while (std::getline(in, part, ',')) {
        const std::string p = trim(part);
        if (p.empty()) continue;
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(p, &pos));
            if (pos != p.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ValidationError("config: key '" + key + "' has a non-numeric entry: '" + p + "'");
        }
    }
    if (out.empty())
        throw ValidationError("config: key '" + key + "' holds an empty list");
    return out;
}

void KvConfig::require_known(const std::vector<std::string>& allowed) const {
    for (const auto& [key, value] : kv_) {
        bool ok = false;
        for (const auto& cand : allowed) {
            if (!cand.empty() && cand.back() == '.') {
                if (key.rfind(cand, 0) == 0) {
                    ok = true;
                    break;
                }
            } else if (key == cand) {
                ok = true;
                break;
            }
        }
        if (!ok) throw ValidationError("config: unknown key '" + key + "'");
    }
}

namespace {

// Holds the output directory lock for the duration of a run.
class RunLock {
  public:
    explicit RunLock(const fs::path& dir) : path_(dir / "run.lock") {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create output directory " + dir.string());
        if (fs::exists(path_))
            throw IoError("output directory is locked by " + path_.string() +
                          " (another run in progress, or remove the stale lock)");
        write_text_file(path_.string(), "locked\n");
    }
    ~RunLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

  private:
    fs::path path_;
};

// Collects artifacts, writes them atomically, then fingerprints them into
// the manifest.
class ArtifactWriter {
  public:
    explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) {}

    void write(const std::string& name, const std::string& content) {
        const fs::path target = dir_ / name;
        const fs::path tmp = dir_ / (name + ".tmp");
        write_text_file(tmp.string(), content);
        std::error_code ec;
        fs::rename(tmp, target, ec);
        if (ec) throw IoError("cannot move artifact into place: " + target.string());
        hashes_[name] = sha256_hex(content);
    }

    void write_manifest(const std::string& command, const KvConfig& config,
                        const nlohmann::json& inputs, double runtime_seconds) {
        nlohmann::json cfg = nlohmann::json::object();
        for (const auto& [k, v] : config.entries()) cfg[k] = v;
        nlohmann::json artifacts = nlohmann::json::object();
        for (const auto& [name, hash] : hashes_) artifacts[name] = hash;
        nlohmann::json manifest{{"command", command},
                                {"config", cfg},
                                {"inputs", inputs},
                                {"artifacts", artifacts},
                                {"runtime_seconds", runtime_seconds},
                                {"tool", "reglgc"},
                                {"tool_version", "0.1.0"}};
        const std::string body = manifest.dump(2) + "\n";
        const fs::path target = dir_ / "manifest.json";
        const fs::path tmp = dir_ / "manifest.json.tmp";
        write_text_file(tmp.string(), body);
        std::error_code ec;
        fs::rename(tmp, target, ec);
        if (ec) throw IoError("cannot move manifest into place: " + target.string());
    }

  private:
    fs::path dir_;
    std::map<std::string, std::string> hashes_;
};

struct LoadedInput {
    ReturnSeries series;
    LoadReport report;
    std::string path;
};

LoadedInput load_input(const KvConfig& cfg) {
    LoadedInput in;
    in.path = cfg.require_string("input.path");
    CsvColumns cols;
    cols.time = cfg.get_string("input.time_column", "");
    cols.a = cfg.require_string("input.a_column");
    cols.b = cfg.require_string("input.b_column");
    cols.label = cfg.get_string("input.label_column", "");
    const std::string mode_s = cfg.get_string("input.mode", "returns");
    LoadMode mode;
    if (mode_s == "returns")
        mode = LoadMode::returns;
    else if (mode_s == "prices")
        mode = LoadMode::prices;
    else
        throw ValidationError("config: input.mode must be 'returns' or 'prices'");
    in.series = load_series_csv(in.path, cols, mode, &in.report);
    return in;
}

TestConfig test_config_from(const KvConfig& cfg, std::uint64_t seed, int threads) {
    TestConfig tc;
    tc.n_boot = cfg.get_int("test.n_boot", 1000);
    tc.alpha = cfg.get_double("test.alpha", 0.05);
    tc.correction = correction_from_string(cfg.get_string("test.correction", "bonferroni"));
    tc.grid.n = cfg.get_int("test.grid_n", 7);
    tc.grid.lo_pct = cfg.get_double("test.grid_lo", 0.05);
    tc.grid.hi_pct = cfg.get_double("test.grid_hi", 0.95);
    tc.bandwidth.factor = cfg.get_double("test.bandwidth_factor", 1.1);
    if (cfg.has("test.bandwidth_a")) tc.bandwidth.b1 = cfg.get_double("test.bandwidth_a", 0.0);
    if (cfg.has("test.bandwidth_b")) tc.bandwidth.b2 = cfg.get_double("test.bandwidth_b", 0.0);
    tc.min_regime_size = static_cast<std::size_t>(cfg.get_int("test.min_regime_size", 20));
    tc.seed = seed;
    tc.threads = threads;
    return tc;
}

CopulaSpec copula_spec_from(const KvConfig& cfg, const std::string& prefix,
                            const CopulaSpec* fallback) {
    if (!cfg.has(prefix + "family")) {
        if (fallback != nullptr) return *fallback;
        throw ValidationError("config: missing required key '" + prefix + "family'");
    }
    CopulaSpec spec;
    spec.family = copula_family_from_string(cfg.require_string(prefix + "family"));
    spec.param = cfg.get_double(prefix + "param", 0.0);
    if (!cfg.has(prefix + "param"))
        throw ValidationError("config: missing required key '" + prefix + "param'");
    spec.mean_a = cfg.get_double(prefix + "mean_a", 0.0);
    spec.mean_b = cfg.get_double(prefix + "mean_b", 0.0);
    spec.sd_a = cfg.get_double(prefix + "sd_a", 1.0);
    spec.sd_b = cfg.get_double(prefix + "sd_b", 1.0);
    spec.validate();
    return spec;
}

std::string labels_csv(const ReturnSeries& series, const Eigen::MatrixXd* prob) {
    std::ostringstream out;
    out << "t,timestamp,label";
    if (prob != nullptr)
        for (Eigen::Index j = 0; j < prob->cols(); ++j) out << ",prob_" << (j + 1);
    out << '\n';
    for (std::size_t t = 0; t < series.size(); ++t) {
        out << (t + 1) << ',';
        if (!series.timestamps.empty()) out << csv_escape(series.timestamps[t]);
        out << ',';
        if (!series.labels.empty()) out << series.labels[t];
        if (prob != nullptr) {
            for (Eigen::Index j = 0; j < prob->cols(); ++j)
                out << ',' << format_double((*prob)(static_cast<Eigen::Index>(t), j));
        }
        out << '\n';
    }
    return out.str();
}

std::string series_csv(const ReturnSeries& series) {
    std::ostringstream out;
    out << "t,timestamp,a,b,label\n";
    for (std::size_t t = 0; t < series.size(); ++t) {
        out << (t + 1) << ',';
        if (!series.timestamps.empty()) out << csv_escape(series.timestamps[t]);
        out << ',';
        if (!series.is_missing(t))
            out << format_double(series.a[t]) << ',' << format_double(series.b[t]);
        else
            out << ',';
        out << ',';
        if (!series.labels.empty()) out << series.labels[t];
        out << '\n';
    }
    return out.str();
}

constexpr std::uint64_t kDefaultSeed = 12345;

}  // namespace

std::string run_analyze(const std::string& config_text) {
    const auto t0 = std::chrono::steady_clock::now();
    const KvConfig cfg = KvConfig::parse(config_text);
    cfg.require_known({"input.", "garch.", "hmm.", "test.", "output.", "seed", "threads"});

    const std::uint64_t seed = cfg.get_u64("seed", kDefaultSeed);
    const int threads = cfg.get_int("threads", 0);
    const fs::path out_dir = cfg.require_string("output.dir");
    RunLock lock(out_dir);
    ArtifactWriter artifacts(out_dir);
    std::ostringstream summary;

    LoadedInput input = load_input(cfg);
    const ReturnSeries& raw = input.series;
    summary << "loaded " << raw.size() << " rows from " << input.path << " ("
            << input.report.rows_missing << " missing)\n";

    artifacts.write("summary.json", summary_to_json(summarize(raw)));

    // Volatility filter: marginal GARCH(1,1)-t on the raw returns; the
    // dependence analysis then runs on the standardized residuals.
    const bool garch_enabled = cfg.get_bool("garch.enabled", true);
    ReturnSeries filtered = raw;
    if (garch_enabled) {
        GarchOptions gopts;
        gopts.mean_mode = mean_mode_from_string(cfg.get_string("garch.mean_mode", "mle"));
        gopts.seed = seed ^ 0x9a7c15u;
        const auto xa = raw.observed_a();
        const auto xb = raw.observed_b();
        if (raw.n_observed() != raw.size())
            summary << "warning: volatility filter skips missing rows in the recursion\n";
        const GarchFit fit_a = fit_garch(xa, gopts);
        const GarchFit fit_b = fit_garch(xb, gopts);
        artifacts.write("garch_a.json", garch_to_json(fit_a));
        artifacts.write("garch_b.json", garch_to_json(fit_b));
        const auto res_a = garch_residuals(xa, fit_a.params);
        const auto res_b = garch_residuals(xb, fit_b.params);
        std::size_t j = 0;
        for (std::size_t t = 0; t < filtered.size(); ++t) {
            if (filtered.is_missing(t)) continue;
            filtered.a[t] = res_a[j];
            filtered.b[t] = res_b[j];
            ++j;
        }
        auto one_line = [](const char* tag, const GarchFit& f) {
            std::ostringstream s;
            s << tag << ": mu=" << format_double(f.params.mu)
              << " omega=" << format_double(f.params.omega)
              << " alpha=" << format_double(f.params.alpha)
              << " beta=" << format_double(f.params.beta)
              << " shape=" << format_double(f.params.shape) << " loglik=" << format_double(f.loglik)
              << '\n';
            return s.str();
        };
        summary << one_line("garch a", fit_a) << one_line("garch b", fit_b);
    }

    // Regime labels: taken from the input when a label column was given,
    // otherwise decoded from an HMM fitted to the raw returns.
    if (!raw.has_labels()) {
        const int c = cfg.get_int("hmm.n_regimes", 2);
        HmmOptions hopts;
        hopts.restarts = cfg.get_int("hmm.restarts", 5);
        hopts.estimate_initial = cfg.get_bool("hmm.estimate_initial", false);
        hopts.standard_errors = cfg.get_bool("hmm.standard_errors", true);
        hopts.seed = seed ^ 0x3779b9u;
        hopts.threads = threads;
        const HmmFit fit = fit_hmm(raw, c, hopts);
        const HmmSmoothing sm = hmm_smooth(fit.model, raw);
        filtered.labels = sm.labels;
        artifacts.write("hmm.json", hmm_to_json(fit));
        {
            ReturnSeries labeled = raw;
            labeled.labels = sm.labels;
            artifacts.write("labels.csv", labels_csv(labeled, &sm.prob));
        }
        summary << "hmm: " << c << " regimes, loglik=" << format_double(fit.loglik)
                << " aic=" << format_double(fit.aic) << " bic=" << format_double(fit.bic) << '\n';
    } else {
        filtered.labels = raw.labels;
        artifacts.write("labels.csv", labels_csv(raw, nullptr));
        summary << "labels: taken from input column\n";
    }

    artifacts.write("filtered.csv", series_csv(filtered));

    const TestConfig tc = test_config_from(cfg, seed, threads);
    const TestReport report = run_regime_test(filtered, tc);
    for (int k = 1; k <= report.n_regimes; ++k)
        artifacts.write("map_regime_" + std::to_string(k) + ".csv",
                        map_to_csv(report.maps[static_cast<std::size_t>(k - 1)]));
    artifacts.write("test.json", test_report_to_json(report));
    artifacts.write("pvalues.csv", pvalue_matrix_csv(report));

    summary << "test: " << report.n_regimes << " regimes, B=" << report.n_boot
            << ", threshold=" << format_double(report.threshold) << " ("
            << to_string(report.correction) << ")\n";
    for (const auto& p : report.pairs) {
        summary << "  pair " << p.regime_k << "-" << p.regime_l << ": D1=" << format_double(p.d1)
                << " p=" << format_double(p.p_raw) << " (count/B=" << format_double(p.p_count)
                << ") " << (p.reject ? "reject" : "keep") << '\n';
    }
    for (const auto& w : report.warnings) summary << "warning: " << w << '\n';

    nlohmann::json inputs{{"path", input.path}, {"sha256", sha256_file_hex(input.path)}};
    const double runtime =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    artifacts.write_manifest("analyze", cfg, inputs, runtime);
    return summary.str();
}

std::string run_select(const std::string& config_text) {
    const auto t0 = std::chrono::steady_clock::now();
    const KvConfig cfg = KvConfig::parse(config_text);
    cfg.require_known({"input.", "hmm.", "select.", "output.", "seed", "threads"});

    const std::uint64_t seed = cfg.get_u64("seed", kDefaultSeed);
    const int threads = cfg.get_int("threads", 0);
    const fs::path out_dir = cfg.require_string("output.dir");
    const int c_min = cfg.get_int("select.min_regimes", 1);
    const int c_max = cfg.get_int("select.max_regimes", 5);
    if (c_min < 1 || c_max < c_min)
        throw ValidationError("config: select range must satisfy 1 <= min <= max");

    RunLock lock(out_dir);
    ArtifactWriter artifacts(out_dir);
    LoadedInput input = load_input(cfg);

    HmmOptions hopts;
    hopts.restarts = cfg.get_int("hmm.restarts", 5);
    hopts.estimate_initial = cfg.get_bool("hmm.estimate_initial", false);
    hopts.threads = threads;

    struct Row {
        int c;
        double loglik, aic, bic;
        int n_params;
        bool converged;
    };
    std::vector<Row> rows;
    std::ostringstream summary;
    for (int c = c_min; c <= c_max; ++c) {
        hopts.seed = Rng::stream(seed, static_cast<std::uint64_t>(c)).next_u64();
        const HmmFit fit = fit_hmm(input.series, c, hopts);
        rows.push_back({c, fit.loglik, fit.aic, fit.bic, fit.n_params, fit.converged});
    }
    const auto best_aic =
        std::min_element(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
            return a.aic < b.aic;
        });
    const auto best_bic =
        std::min_element(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
            return a.bic < b.bic;
        });

    std::ostringstream csv;
    csv << "n_regimes,loglik,n_params,aic,bic,converged\n";
    nlohmann::json jrows = nlohmann::json::array();
    for (const auto& r : rows) {
        csv << r.c << ',' << format_double(r.loglik) << ',' << r.n_params << ','
            << format_double(r.aic) << ',' << format_double(r.bic) << ',' << (r.converged ? 1 : 0)
            << '\n';
        jrows.push_back({{"n_regimes", r.c},
                         {"loglik", r.loglik},
                         {"n_params", r.n_params},
                         {"aic", r.aic},
                         {"bic", r.bic},
                         {"converged", r.converged}});
        summary << "C=" << r.c << " loglik=" << format_double(r.loglik)
                << " aic=" << format_double(r.aic) << " bic=" << format_double(r.bic) << '\n';
    }
    artifacts.write("selection.csv", csv.str());
    nlohmann::json jsel{{"models", jrows},
                        {"best_aic", best_aic->c},
                        {"best_bic", best_bic->c},
                        {"seed", seed}};
    artifacts.write("selection.json", jsel.dump(2) + "\n");
    summary << "best by aic: C=" << best_aic->c << ", best by bic: C=" << best_bic->c << '\n';

    nlohmann::json inputs{{"path", input.path}, {"sha256", sha256_file_hex(input.path)}};
    const double runtime =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    artifacts.write_manifest("select", cfg, inputs, runtime);
    return summary.str();
}

std::string run_study(const std::string& config_text) {
    const auto t0 = std::chrono::steady_clock::now();
    const KvConfig cfg = KvConfig::parse(config_text);
    cfg.require_known({"study.", "test.", "output.", "seed", "threads"});

    const std::uint64_t seed = cfg.get_u64("seed", kDefaultSeed);
    const int threads = cfg.get_int("threads", 0);
    const fs::path out_dir = cfg.require_string("output.dir");
    const std::string kind = cfg.require_string("study.kind");

    RunLock lock(out_dir);
    ArtifactWriter artifacts(out_dir);
    std::ostringstream summary;

    const std::vector<double> levels = cfg.get_double_list("study.levels", {0.01, 0.05, 0.10});
    GridSpec grid;
    grid.n = cfg.get_int("test.grid_n", 7);
    grid.lo_pct = cfg.get_double("test.grid_lo", 0.05);
    grid.hi_pct = cfg.get_double("test.grid_hi", 0.95);
    BandwidthSpec bw;
    bw.factor = cfg.get_double("test.bandwidth_factor", 1.1);

    if (kind == "level" || kind == "power") {
        TwoRegimeDesign design;
        design.regime1 = copula_spec_from(cfg, "study.regime1.", nullptr);
        design.regime2 = copula_spec_from(cfg, "study.regime2.", &design.regime1);
        design.size1 = static_cast<std::size_t>(cfg.get_int("study.size1", 300));
        design.size2 = static_cast<std::size_t>(cfg.get_int("study.size2", 100));
        design.n_datasets = cfg.get_int("study.n_datasets", 200);
        design.n_boot = cfg.get_int("study.n_boot", 200);
        design.levels = levels;
        design.grid = grid;
        design.bandwidth = bw;
        design.seed = seed;
        design.threads = threads;
        const TwoRegimeStudyResult result = run_two_regime_study(design);
        artifacts.write("study.json", two_regime_result_to_json(result, design, kind));
        artifacts.write("rates.csv", rates_to_csv(result.rates, kind));
        summary << kind << " study: M=" << result.n_effective << "/" << design.n_datasets
                << " effective, B=" << design.n_boot << '\n';
        for (const auto& r : result.rates)
            summary << "  alpha=" << format_double(r.alpha) << " rate=" << format_double(r.rate)
                    << " [" << format_double(r.ci_lo) << ", " << format_double(r.ci_hi) << "]\n";
    } else if (kind == "misclassification") {
        MisclassificationDesign design;
        design.regime1 = copula_spec_from(cfg, "study.regime1.", nullptr);
        design.regime2 = copula_spec_from(cfg, "study.regime2.", nullptr);
        design.n_obs = static_cast<std::size_t>(cfg.get_int("study.n_obs", 500));
        const double stay1 = cfg.get_double("study.stay1", 0.95);
        const double stay2 = cfg.get_double("study.stay2", 0.85);
        design.tpm << stay1, 1.0 - stay1, 1.0 - stay2, stay2;
        design.n_datasets = cfg.get_int("study.n_datasets", 200);
        design.n_boot = cfg.get_int("study.n_boot", 200);
        design.levels = levels;
        design.grid = grid;
        design.bandwidth = bw;
        design.hmm_restarts = cfg.get_int("study.hmm_restarts", 0);
        design.seed = seed;
        design.threads = threads;
        const MisclassificationResult result = run_misclassification_study(design);
        artifacts.write("study.json", misclassification_result_to_json(result, design));
        std::string rates = rates_to_csv(result.true_label_rates, "true_labels");
        {
            // Append the predicted-label block without repeating the header.
            std::string pred = rates_to_csv(result.predicted_label_rates, "predicted_labels");
            rates += pred.substr(pred.find('\n') + 1);
        }
        artifacts.write("rates.csv", rates);
        std::ostringstream conf;
        conf << "true_regime,predicted_1,predicted_2\n";
        conf << "1," << format_double(result.confusion(0, 0)) << ','
             << format_double(result.confusion(0, 1)) << '\n';
        conf << "2," << format_double(result.confusion(1, 0)) << ','
             << format_double(result.confusion(1, 1)) << '\n';
        artifacts.write("confusion.csv", conf.str());
        summary << "misclassification study: M=" << result.n_effective << "/" << design.n_datasets
                << " effective, accuracy=" << format_double(result.accuracy) << '\n';
        for (const auto& r : result.true_label_rates)
            summary << "  true labels:      alpha=" << format_double(r.alpha)
                    << " rate=" << format_double(r.rate) << '\n';
        for (const auto& r : result.predicted_label_rates)
            summary << "  predicted labels: alpha=" << format_double(r.alpha)
                    << " rate=" << format_double(r.rate) << '\n';
    } else {
        throw ValidationError("config: study.kind must be level, power, or misclassification");
    }

    const double runtime =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    artifacts.write_manifest("study", cfg, nlohmann::json::object(), runtime);
    return summary.str();
}

std::string run_simulate(const std::string& config_text) {
    const KvConfig cfg = KvConfig::parse(config_text);
    cfg.require_known({"simulate.", "output.", "seed"});

    const std::uint64_t seed = cfg.get_u64("seed", kDefaultSeed);
    const std::string kind = cfg.require_string("simulate.kind");
    const std::string out_path = cfg.require_string("output.path");
    const auto n = static_cast<std::size_t>(cfg.get_int("simulate.n", 0));
    if (n == 0) throw ValidationError("config: simulate.n must be positive");

    std::ostringstream summary;
    if (kind == "copula") {
        const CopulaSpec spec = copula_spec_from(cfg, "simulate.", nullptr);
        const ReturnSeries s = sample_copula(spec, n, seed);
        std::ostringstream out;
        out << "a,b\n";
        for (std::size_t t = 0; t < s.size(); ++t)
            out << format_double(s.a[t]) << ',' << format_double(s.b[t]) << '\n';
        write_text_file(out_path, out.str());
        summary << "wrote " << n << " draws (" << to_string(spec.family) << ") to " << out_path
                << '\n';
    } else if (kind == "garch") {
        GarchParams p;
        p.mu = cfg.get_double("simulate.mu", 0.0);
        p.omega = cfg.get_double("simulate.omega", 0.01);
        p.alpha = cfg.get_double("simulate.alpha", 0.05);
        p.beta = cfg.get_double("simulate.beta", 0.90);
        p.shape = cfg.get_double("simulate.shape", 8.0);
        const std::vector<double> x = simulate_garch(p, n, seed);
        std::ostringstream out;
        out << "x\n";
        for (double v : x) out << format_double(v) << '\n';
        write_text_file(out_path, out.str());
        summary << "wrote " << n << " garch draws to " << out_path << '\n';
    } else if (kind == "hmm") {
        // Regime blocks are ';'-separated, entries ','-separated.
        auto parse_blocks = [&](const std::string& key, std::size_t want) {
            const std::string raw = cfg.require_string(key);
            std::vector<std::vector<double>> blocks;
            std::istringstream in(raw);
            std::string block;
            while (std::getline(in, block, ';')) {
                std::vector<double> vals;
                std::istringstream bin(block);
                std::string part;
                while (std::getline(bin, part, ',')) {
                    const std::string p = trim(part);
                    if (p.empty()) continue;
                    vals.push_back(std::stod(p));
                }
                if (vals.size() != want)
                    throw ValidationError("config: " + key + " blocks need " +
                                          std::to_string(want) + " entries");
                blocks.push_back(vals);
            }
            if (blocks.empty()) throw ValidationError("config: " + key + " is empty");
            return blocks;
        };
        const auto means = parse_blocks("simulate.means", 2);
        const auto covs = parse_blocks("simulate.covariances", 3);  // c11, c12, c22
        const int c = static_cast<int>(means.size());
        if (covs.size() != means.size())
            throw ValidationError("config: simulate.covariances count differs from means");
        const auto tpm_rows = parse_blocks("simulate.tpm", static_cast<std::size_t>(c));
        if (tpm_rows.size() != static_cast<std::size_t>(c))
            throw ValidationError("config: simulate.tpm must have one row per regime");
        HmmModel model;
        model.n_regimes = c;
        for (int i = 0; i < c; ++i) {
            const auto iu = static_cast<std::size_t>(i);
            model.means.emplace_back(means[iu][0], means[iu][1]);
            Eigen::Matrix2d cov;
            cov << covs[iu][0], covs[iu][1], covs[iu][1], covs[iu][2];
            model.covariances.push_back(cov);
        }
        model.tpm.resize(c, c);
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < c; ++j)
                model.tpm(i, j) = tpm_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        model.initial = stationary_distribution(model.tpm);
        const ReturnSeries s = simulate_hmm(model, n, seed);
        std::ostringstream out;
        out << "a,b,regime\n";
        for (std::size_t t = 0; t < s.size(); ++t)
            out << format_double(s.a[t]) << ',' << format_double(s.b[t]) << ',' << s.labels[t]
                << '\n';
        write_text_file(out_path, out.str());
        summary << "wrote " << n << " hmm draws (" << c << " regimes) to " << out_path << '\n';
    } else {
        throw ValidationError("config: simulate.kind must be copula, garch, or hmm");
    }
    return summary.str();
}

int run_subcommand(const std::string& name, const std::string& config_text, std::string* summary,
                   std::string* error) {
    try {
        std::string result;
        if (name == "analyze")
            result = run_analyze(config_text);
        else if (name == "select")
            result = run_select(config_text);
        else if (name == "study")
            result = run_study(config_text);
        else if (name == "simulate")
            result = run_simulate(config_text);
        else
            throw ValidationError("unknown subcommand '" + name + "'");
        if (summary != nullptr) *summary = result;
        return 0;
    } catch (const Error& e) {
        if (error != nullptr) *error = e.what();
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        if (error != nullptr) *error = e.what();
        return static_cast<int>(ErrorCode::numerical);
    }
}

}  // namespace reglgc
