#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "reglgc/copula.hpp"
#include "reglgc/csv.hpp"
#include "reglgc/errors.hpp"
#include "reglgc/pipeline.hpp"
#include "reglgc/rng.hpp"
#include "reglgc/series.hpp"

using namespace reglgc;
namespace fs = std::filesystem;

namespace {

// Per-test scratch directory, removed on destruction.
struct Scratch {
    fs::path dir;

    explicit Scratch(const std::string& tag) {
        dir = fs::temp_directory_path() / ("reglgc_test_" + tag);
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }

    std::string path(const std::string& name) const { return (dir / name).string(); }
};

std::string write_two_regime_csv(const Scratch& scratch, std::uint64_t seed) {
    CopulaSpec calm;
    calm.family = CopulaFamily::gaussian;
    calm.param = 0.7;
    CopulaSpec wild;
    wild.family = CopulaFamily::gaussian;
    wild.param = -0.5;
    wild.sd_a = 2.0;
    wild.sd_b = 2.0;
    Rng rng(seed);
    std::string csv = "ret_a,ret_b,regime\n";
    std::vector<double> a(420), b(420);
    sample_into(calm, 280, rng, a.data(), b.data());
    sample_into(wild, 140, rng, a.data() + 280, b.data() + 280);
    for (std::size_t t = 0; t < 420; ++t) {
        csv += format_double(a[t]) + "," + format_double(b[t]) + "," + (t < 280 ? "1" : "2") +
               "\n";
    }
    const std::string path = scratch.path("input.csv");
    write_text_file(path, csv);
    return path;
}

}  // namespace

TEST_CASE("config parser reads keys comments and overrides") {
    const KvConfig cfg = KvConfig::parse(
        "# comment line\n"
        "alpha = 0.05\n"
        "name= hello world \n"
        "\n"
        "flag = true\n"
        "alpha = 0.10\n"
        "list = 1, 2.5,3\n"
        "count = 42\n");
    CHECK(cfg.get_double("alpha", 0.0) == doctest::Approx(0.10));  // later wins
    CHECK(cfg.get_string("name", "") == "hello world");
    CHECK(cfg.get_bool("flag", false));
    CHECK(cfg.get_int("count", 0) == 42);
    CHECK(cfg.get_u64("count", 0) == 42);
    const auto list = cfg.get_double_list("list", {});
    REQUIRE(list.size() == 3);
    CHECK(list[1] == doctest::Approx(2.5));
    CHECK(cfg.get_int("absent", -7) == -7);
    CHECK(!cfg.has("absent"));
    CHECK_THROWS_AS(cfg.require_string("absent"), ValidationError);
    CHECK_THROWS_AS(cfg.get_int("name", 0), ValidationError);
    CHECK_THROWS_AS(cfg.get_bool("count", false), ValidationError);
    CHECK_THROWS_AS(KvConfig::parse("no equals sign here\n"), ValidationError);
}

TEST_CASE("config rejects unknown keys against an allow list") {
    const KvConfig cfg = KvConfig::parse("input.path = x\ninput.mode = returns\nseed = 3\n");
    cfg.require_known({"input.", "seed"});
    CHECK_THROWS_AS(cfg.require_known({"input."}), ValidationError);
    CHECK_THROWS_AS(KvConfig::parse("garch.enable = true\n").require_known({"garch.enabled"}),
                    ValidationError);
}

TEST_CASE("analyze writes the full artifact set with labeled input") {
    Scratch scratch("analyze");
    const std::string input = write_two_regime_csv(scratch, 5100);
    const std::string out = scratch.path("run");
    const std::string config =
        "input.path = " + input +
        "\ninput.a_column = ret_a\ninput.b_column = ret_b\ninput.label_column = regime\n"
        "test.n_boot = 49\nseed = 9\nthreads = 1\noutput.dir = " + out + "\n";
    std::string summary, error;
    const int code = run_subcommand("analyze", config, &summary, &error);
    INFO(error);
    REQUIRE(code == 0);
    CHECK(summary.find("loaded 420 rows") != std::string::npos);
    CHECK(summary.find("pair 1-2") != std::string::npos);

    for (const char* name :
         {"summary.json", "garch_a.json", "garch_b.json", "labels.csv", "filtered.csv",
          "map_regime_1.csv", "map_regime_2.csv", "test.json", "pvalues.csv", "manifest.json"}) {
        INFO(name);
        CHECK(fs::exists(fs::path(out) / name));
    }
    CHECK(!fs::exists(fs::path(out) / "run.lock"));
    CHECK(!fs::exists(fs::path(out) / "hmm.json"));  // labels came from the input

    const auto manifest = nlohmann::json::parse(read_text_file((fs::path(out) / "manifest.json").string()));
    CHECK(manifest["command"] == "analyze");
    CHECK(manifest["artifacts"].size() == 9);
    CHECK(manifest["inputs"]["sha256"].get<std::string>().size() == 64);
    CHECK(manifest["config"]["seed"] == "9");

    // The regimes were built with opposite dependence, the test must reject.
    const auto test = nlohmann::json::parse(read_text_file((fs::path(out) / "test.json").string()));
    CHECK(test["pairs"][0]["reject"].get<bool>());
}

TEST_CASE("same seed gives byte-identical artifacts across runs and threads") {
    Scratch scratch("repro");
    const std::string input = write_two_regime_csv(scratch, 777);
    auto run_once = [&](const std::string& out, int threads) {
        const std::string config =
            "input.path = " + input +
            "\ninput.a_column = ret_a\ninput.b_column = ret_b\ninput.label_column = regime\n"
            "test.n_boot = 30\nseed = 4242\nthreads = " + std::to_string(threads) +
            "\noutput.dir = " + out + "\n";
        std::string summary, error;
        REQUIRE(run_subcommand("analyze", config, &summary, &error) == 0);
        return nlohmann::json::parse(read_text_file((fs::path(out) / "manifest.json").string()));
    };
    const auto m1 = run_once(scratch.path("r1"), 1);
    const auto m2 = run_once(scratch.path("r2"), 1);
    const auto m3 = run_once(scratch.path("r3"), 3);
    CHECK(m1["artifacts"] == m2["artifacts"]);
    CHECK(m1["artifacts"] == m3["artifacts"]);
}

TEST_CASE("analyze without labels fits the regime model") {
    Scratch scratch("hmmpath");
    // Unlabeled two-regime data with distinct scales.
    CopulaSpec calm;
    calm.family = CopulaFamily::gaussian;
    calm.param = 0.5;
    calm.sd_a = 0.6;
    calm.sd_b = 0.6;
    CopulaSpec wild = calm;
    wild.param = -0.4;
    wild.sd_a = 2.4;
    wild.sd_b = 2.4;
    Rng rng(31);
    std::vector<double> a(360), b(360);
    sample_into(calm, 240, rng, a.data(), b.data());
    sample_into(wild, 120, rng, a.data() + 240, b.data() + 240);
    std::string csv = "x,y\n";
    for (std::size_t t = 0; t < a.size(); ++t)
        csv += format_double(a[t]) + "," + format_double(b[t]) + "\n";
    write_text_file(scratch.path("u.csv"), csv);

    const std::string out = scratch.path("run");
    const std::string config =
        "input.path = " + scratch.path("u.csv") +
        "\ninput.a_column = x\ninput.b_column = y\n"
        "hmm.n_regimes = 2\nhmm.restarts = 2\ntest.n_boot = 19\nseed = 77\nthreads = 1\n"
        "garch.enabled = false\noutput.dir = " + out + "\n";
    std::string summary, error;
    const int code = run_subcommand("analyze", config, &summary, &error);
    INFO(error);
    REQUIRE(code == 0);
    CHECK(fs::exists(fs::path(out) / "hmm.json"));
    const auto labels = read_text_file((fs::path(out) / "labels.csv").string());
    CHECK(labels.rfind("t,timestamp,label,prob_1,prob_2\n", 0) == 0);
    const auto hmm = nlohmann::json::parse(read_text_file((fs::path(out) / "hmm.json").string()));
    CHECK(hmm["n_regimes"] == 2);
}

TEST_CASE("run lock blocks concurrent use of one output directory") {
    Scratch scratch("lock");
    const std::string input = write_two_regime_csv(scratch, 12);
    const std::string out = scratch.path("run");
    fs::create_directories(out);
    write_text_file((fs::path(out) / "run.lock").string(), "held\n");
    const std::string config =
        "input.path = " + input +
        "\ninput.a_column = ret_a\ninput.b_column = ret_b\ninput.label_column = regime\n"
        "test.n_boot = 9\nseed = 1\nthreads = 1\noutput.dir = " + out + "\n";
    std::string summary, error;
    const int code = run_subcommand("analyze", config, &summary, &error);
    CHECK(code == 3);  // io error
    CHECK(error.find("lock") != std::string::npos);
}

TEST_CASE("subcommand dispatch maps errors to exit codes") {
    std::string summary, error;
    CHECK(run_subcommand("bogus", "", &summary, &error) == 1);
    CHECK(run_subcommand("analyze", "unknown.key = 1\n", &summary, &error) == 1);
    CHECK(error.find("unknown key") != std::string::npos);
    // Missing input file surfaces as io.
    Scratch scratch("codes");
    const std::string config =
        "input.path = /nonexistent/file.csv\ninput.a_column = a\ninput.b_column = b\n"
        "output.dir = " + scratch.path("out") + "\n";
    CHECK(run_subcommand("analyze", config, &summary, &error) == 3);
}

TEST_CASE("simulate subcommand writes each dataset kind") {
    Scratch scratch("sim");
    std::string summary, error;
    const std::string base = "output.path = " + scratch.path("d.csv") + "\nseed = 5\n";
    REQUIRE(run_subcommand("simulate",
                           base + "simulate.kind = copula\nsimulate.family = gumbel\n"
                                  "simulate.param = 2\nsimulate.n = 64\n",
                           &summary, &error) == 0);
    CsvTable t = read_csv(scratch.path("d.csv"));
    CHECK(t.rows.size() == 64);
    CHECK(t.header == std::vector<std::string>{"a", "b"});

    REQUIRE(run_subcommand("simulate",
                           base + "simulate.kind = garch\nsimulate.n = 32\n"
                                  "simulate.omega = 0.02\nsimulate.shape = 6\n",
                           &summary, &error) == 0);
    t = read_csv(scratch.path("d.csv"));
    CHECK(t.rows.size() == 32);

    REQUIRE(run_subcommand("simulate",
                           base + "simulate.kind = hmm\nsimulate.n = 48\n"
                                  "simulate.means = 0,0; 1,1\n"
                                  "simulate.covariances = 1,0.2,1; 2,-0.3,2\n"
                                  "simulate.tpm = 0.9,0.1; 0.2,0.8\n",
                           &summary, &error) == 0);
    t = read_csv(scratch.path("d.csv"));
    CHECK(t.rows.size() == 48);
    CHECK(t.header == std::vector<std::string>{"a", "b", "regime"});

    CHECK(run_subcommand("simulate", base + "simulate.kind = weird\nsimulate.n = 8\n", &summary,
                         &error) == 1);
    // Same seed, same kind: identical bytes.
    const std::string cfg_a = "output.path = " + scratch.path("s1.csv") +
                              "\nseed = 8\nsimulate.kind = copula\nsimulate.family = clayton\n"
                              "simulate.param = 1.5\nsimulate.n = 40\n";
    const std::string cfg_b = "output.path = " + scratch.path("s2.csv") +
                              "\nseed = 8\nsimulate.kind = copula\nsimulate.family = clayton\n"
                              "simulate.param = 1.5\nsimulate.n = 40\n";
    REQUIRE(run_subcommand("simulate", cfg_a, &summary, &error) == 0);
    REQUIRE(run_subcommand("simulate", cfg_b, &summary, &error) == 0);
    CHECK(read_text_file(scratch.path("s1.csv")) == read_text_file(scratch.path("s2.csv")));
}

TEST_CASE("select ranks regime counts by information criteria") {
    Scratch scratch("select");
    const std::string input = write_two_regime_csv(scratch, 99);
    const std::string out = scratch.path("run");
    const std::string config =
        "input.path = " + input +
        "\ninput.a_column = ret_a\ninput.b_column = ret_b\n"
        "select.min_regimes = 1\nselect.max_regimes = 2\nhmm.restarts = 2\n"
        "seed = 3\nthreads = 1\noutput.dir = " + out + "\n";
    std::string summary, error;
    const int code = run_subcommand("select", config, &summary, &error);
    INFO(error);
    REQUIRE(code == 0);
    const auto sel = nlohmann::json::parse(read_text_file((fs::path(out) / "selection.json").string()));
    REQUIRE(sel["models"].size() == 2);
    // The sample mixes two distinct scales: two regimes must win.
    CHECK(sel["best_bic"] == 2);
    const CsvTable table = read_csv((fs::path(out) / "selection.csv").string());
    CHECK(table.rows.size() == 2);
    CHECK(table.column("bic") == 4);
}

TEST_CASE("study subcommand runs a miniature level study") {
    Scratch scratch("study");
    const std::string out = scratch.path("run");
    const std::string config =
        "study.kind = level\nstudy.n_datasets = 4\nstudy.n_boot = 19\n"
        "study.levels = 0.10\nstudy.size1 = 60\nstudy.size2 = 40\n"
        "study.regime1.family = gaussian\nstudy.regime1.param = 0.4\n"
        "seed = 21\nthreads = 1\noutput.dir = " + out + "\n";
    std::string summary, error;
    const int code = run_subcommand("study", config, &summary, &error);
    INFO(error);
    REQUIRE(code == 0);
    CHECK(fs::exists(fs::path(out) / "study.json"));
    CHECK(fs::exists(fs::path(out) / "rates.csv"));
    const auto study = nlohmann::json::parse(read_text_file((fs::path(out) / "study.json").string()));
    CHECK(study["kind"] == "level");
    CHECK(study["n_effective"] == 4);
}
