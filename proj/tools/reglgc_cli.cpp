// Command line front end. Everything goes through the shared C API: the
// subcommand options are folded into a key = value configuration text and
// handed to reglgc_run.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "reglgc.h"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int threads = 0;
    bool threads_given = false;
};

void add_common(CLI::App* cmd, CommonArgs* args, bool with_threads) {
    cmd->add_option("-c,--config", args->config_path,
                    "Configuration file with key = value lines");
    cmd->add_option("--set", args->overrides, "Override a configuration key, as key=value")
        ->expected(-1);
    cmd->add_option("--seed", args->seed, "Random seed")->each([args](const std::string&) {
        args->seed_given = true;
    });
    if (with_threads)
        cmd->add_option("--threads", args->threads, "Worker threads (0 = all cores)")
            ->each([args](const std::string&) { args->threads_given = true; });
}

// Configuration text: file content first, then direct flags, then --set
// overrides. Later assignments win.
std::string build_config(const CommonArgs& common,
                         const std::vector<std::pair<std::string, std::string>>& flags) {
    std::ostringstream out;
    if (!common.config_path.empty()) {
        std::ifstream in(common.config_path, std::ios::binary);
        if (!in) {
            std::cerr << "error: cannot read config file " << common.config_path << '\n';
            std::exit(3);
        }
        out << in.rdbuf() << '\n';
    }
    for (const auto& [key, value] : flags) out << key << " = " << value << '\n';
    if (common.seed_given) out << "seed = " << common.seed << '\n';
    if (common.threads_given) out << "threads = " << common.threads << '\n';
    for (const auto& kv : common.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::cerr << "error: --set expects key=value, got '" << kv << "'\n";
            std::exit(1);
        }
        out << kv.substr(0, eq) << " = " << kv.substr(eq + 1) << '\n';
    }
    return out.str();
}

int run(const std::string& subcommand, const CommonArgs& common,
        const std::vector<std::pair<std::string, std::string>>& flags) {
    const std::string config = build_config(common, flags);
    char* summary = nullptr;
    const reglgc_status status = reglgc_run(subcommand.c_str(), config.c_str(), &summary);
    if (status == REGLGC_OK) {
        if (summary != nullptr) {
            std::cout << summary;
            reglgc_string_free(summary);
        }
        return 0;
    }
    std::cerr << "error: " << reglgc_last_error() << '\n';
    return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regime-dependent local dependence analysis"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(reglgc_version()));

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Full pipeline on a return series");
    CommonArgs an_common;
    std::string an_input, an_a, an_b, an_time, an_label, an_out;
    int an_regimes = 0, an_boot = 0;
    double an_alpha = 0.0;
    bool an_prices = false, an_no_garch = false;
    analyze->add_option("-i,--input", an_input, "Input CSV path");
    analyze->add_option("--a-column", an_a, "Column with the first series");
    analyze->add_option("--b-column", an_b, "Column with the second series");
    analyze->add_option("--time-column", an_time, "Timestamp column");
    analyze->add_option("--label-column", an_label, "Known regime label column");
    analyze->add_flag("--prices", an_prices, "Input columns are prices, not returns");
    analyze->add_option("--regimes", an_regimes, "Number of regimes for the hidden Markov model");
    analyze->add_option("--boot", an_boot, "Bootstrap replicates");
    analyze->add_option("--alpha", an_alpha, "Test level");
    analyze->add_flag("--no-garch", an_no_garch, "Skip the volatility filter");
    analyze->add_option("-o,--out", an_out, "Output directory");
    add_common(analyze, &an_common, true);

    // select
    auto* select = app.add_subcommand("select", "Compare regime counts by AIC/BIC");
    CommonArgs se_common;
    std::string se_input, se_a, se_b, se_time, se_out;
    int se_min = 0, se_max = 0;
    select->add_option("-i,--input", se_input, "Input CSV path");
    select->add_option("--a-column", se_a, "Column with the first series");
    select->add_option("--b-column", se_b, "Column with the second series");
    select->add_option("--time-column", se_time, "Timestamp column");
    select->add_option("--min-regimes", se_min, "Smallest regime count");
    select->add_option("--max-regimes", se_max, "Largest regime count");
    select->add_option("-o,--out", se_out, "Output directory");
    add_common(select, &se_common, true);

    // study
    auto* study = app.add_subcommand("study", "Monte Carlo level/power/misclassification study");
    CommonArgs st_common;
    std::string st_kind, st_out;
    int st_datasets = 0, st_boot = 0;
    study->add_option("--kind", st_kind, "level, power, or misclassification");
    study->add_option("--datasets", st_datasets, "Simulated datasets");
    study->add_option("--boot", st_boot, "Bootstrap replicates per dataset");
    study->add_option("-o,--out", st_out, "Output directory");
    add_common(study, &st_common, true);

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Draw one dataset from a configured model");
    CommonArgs si_common;
    std::string si_kind, si_out;
    int si_n = 0;
    simulate->add_option("--kind", si_kind, "copula, garch, or hmm");
    simulate->add_option("-n,--n", si_n, "Observations to draw");
    simulate->add_option("-o,--out", si_out, "Output CSV path");
    add_common(simulate, &si_common, false);

    CLI11_PARSE(app, argc, argv);

    std::vector<std::pair<std::string, std::string>> flags;
    auto put = [&flags](const std::string& key, const std::string& value) {
        if (!value.empty()) flags.emplace_back(key, value);
    };

    if (analyze->parsed()) {
        put("input.path", an_input);
        put("input.a_column", an_a);
        put("input.b_column", an_b);
        put("input.time_column", an_time);
        put("input.label_column", an_label);
        if (an_prices) put("input.mode", "prices");
        if (an_regimes > 0) put("hmm.n_regimes", std::to_string(an_regimes));
        if (an_boot > 0) put("test.n_boot", std::to_string(an_boot));
        if (an_alpha > 0.0) put("test.alpha", std::to_string(an_alpha));
        if (an_no_garch) put("garch.enabled", "false");
        put("output.dir", an_out);
        return run("analyze", an_common, flags);
    }
    if (select->parsed()) {
        put("input.path", se_input);
        put("input.a_column", se_a);
        put("input.b_column", se_b);
        put("input.time_column", se_time);
        if (se_min > 0) put("select.min_regimes", std::to_string(se_min));
        if (se_max > 0) put("select.max_regimes", std::to_string(se_max));
        put("output.dir", se_out);
        return run("select", se_common, flags);
    }
    if (study->parsed()) {
        put("study.kind", st_kind);
        if (st_datasets > 0) put("study.n_datasets", std::to_string(st_datasets));
        if (st_boot > 0) put("study.n_boot", std::to_string(st_boot));
        put("output.dir", st_out);
        return run("study", st_common, flags);
    }
    if (simulate->parsed()) {
        put("simulate.kind", si_kind);
        if (si_n > 0) put("simulate.n", std::to_string(si_n));
        put("output.path", si_out);
        return run("simulate", si_common, flags);
    }
    return 1;
}
