#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "reglgc.h"

namespace fs = std::filesystem;

namespace {

// Two interleaved dependence regimes, built without the C++ library so the
// test only touches the public C surface.
struct Sample {
    std::vector<double> a, b;
    std::vector<int> labels;
};

Sample make_sample(std::size_t n1, std::size_t n2) {
    Sample s;
    // Deterministic pseudo-data: sinusoidal mixtures are plenty for API
    // plumbing checks (the statistics are tested elsewhere).
    std::uint64_t x = 88172645463325252ull;
    auto next = [&x]() {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        return static_cast<double>(x >> 11) / 9007199254740992.0;  // [0,1)
    };
    auto pair_normal = [&](double* z1, double* z2) {
        // Box-Muller from the xorshift uniforms.
        const double u1 = next() + 1e-12, u2 = next();
        const double r = std::sqrt(-2.0 * std::log(u1));
        *z1 = r * std::cos(6.283185307179586 * u2);
        *z2 = r * std::sin(6.283185307179586 * u2);
    };
    for (std::size_t i = 0; i < n1; ++i) {
        double z1, z2;
        pair_normal(&z1, &z2);
        s.a.push_back(z1);
        s.b.push_back(0.8 * z1 + 0.6 * z2);
        s.labels.push_back(1);
    }
    for (std::size_t i = 0; i < n2; ++i) {
        double z1, z2;
        pair_normal(&z1, &z2);
        s.a.push_back(2.0 * z1);
        s.b.push_back(2.0 * (-0.8 * z1 + 0.6 * z2));
        s.labels.push_back(2);
    }
    return s;
}

}  // namespace

TEST_CASE("version and error strings are always present") {
    CHECK(std::strcmp(reglgc_version(), "0.1.0") == 0);
    CHECK(reglgc_last_error() != nullptr);
}

TEST_CASE("series construction and size") {
    const Sample s = make_sample(30, 20);
    reglgc_series* series = nullptr;
    REQUIRE(reglgc_series_from_arrays(s.a.data(), s.b.data(), s.labels.data(), s.a.size(),
                                      &series) == REGLGC_OK);
    CHECK(reglgc_series_size(series) == 50);
    reglgc_series_free(series);

    CHECK(reglgc_series_from_arrays(nullptr, s.b.data(), nullptr, 10, &series) ==
          REGLGC_ERR_VALIDATION);
    CHECK(std::strlen(reglgc_last_error()) > 0);
    CHECK(reglgc_series_size(nullptr) == 0);
}

TEST_CASE("hmm fit decode and json through the c surface") {
    const Sample s = make_sample(220, 120);
    reglgc_series* series = nullptr;
    REQUIRE(reglgc_series_from_arrays(s.a.data(), s.b.data(), nullptr, s.a.size(), &series) ==
            REGLGC_OK);

    reglgc_hmm* fit = nullptr;
    REQUIRE(reglgc_hmm_fit(series, 2, 2, 99, &fit) == REGLGC_OK);

    char* json = nullptr;
    REQUIRE(reglgc_hmm_json(fit, &json) == REGLGC_OK);
    REQUIRE(json != nullptr);
    CHECK(std::string(json).find("\"loglik\"") != std::string::npos);
    reglgc_string_free(json);

    std::vector<int> labels(reglgc_series_size(series), 0);
    REQUIRE(reglgc_hmm_decode(fit, series, labels.data()) == REGLGC_OK);
    for (int lab : labels) {
        CHECK(lab >= 1);
        CHECK(lab <= 2);
    }

    CHECK(reglgc_hmm_fit(series, 0, 1, 1, &fit) == REGLGC_ERR_VALIDATION);
    reglgc_hmm_free(fit);
    reglgc_series_free(series);
}

TEST_CASE("regime test through the c surface rejects distinct regimes") {
    const Sample s = make_sample(260, 160);
    reglgc_series* series = nullptr;
    REQUIRE(reglgc_series_from_arrays(s.a.data(), s.b.data(), s.labels.data(), s.a.size(),
                                      &series) == REGLGC_OK);
    reglgc_report* report = nullptr;
    REQUIRE(reglgc_test_run(series, 49, 0.05, 7, &report) == REGLGC_OK);
    char* json = nullptr;
    REQUIRE(reglgc_test_json(report, &json) == REGLGC_OK);
    const std::string body(json);
    reglgc_string_free(json);
    CHECK(body.find("\"p_raw\"") != std::string::npos);
    CHECK(body.find("\"reject\": true") != std::string::npos);
    reglgc_report_free(report);

    // A series without labels cannot be tested.
    reglgc_series* plain = nullptr;
    REQUIRE(reglgc_series_from_arrays(s.a.data(), s.b.data(), nullptr, s.a.size(), &plain) ==
            REGLGC_OK);
    CHECK(reglgc_test_run(plain, 9, 0.05, 7, &report) == REGLGC_ERR_VALIDATION);
    CHECK(std::string(reglgc_last_error()).find("label") != std::string::npos);
    reglgc_series_free(plain);
    reglgc_series_free(series);
}

TEST_CASE("csv loading through the c surface") {
    const auto path = (fs::temp_directory_path() / "reglgc_capi.csv").string();
    {
        FILE* f = std::fopen(path.c_str(), "wb");
        REQUIRE(f != nullptr);
        std::fputs("t,pa,pb\n1,100,200\n2,101,201\n3,100.5,199\n", f);
        std::fclose(f);
    }
    reglgc_series* series = nullptr;
    REQUIRE(reglgc_series_load_csv(path.c_str(), "t", "pa", "pb", nullptr, 1, &series) ==
            REGLGC_OK);
    CHECK(reglgc_series_size(series) == 2);  // prices became returns
    reglgc_series_free(series);
    CHECK(reglgc_series_load_csv("/no/such/file.csv", nullptr, "a", "b", nullptr, 0, &series) ==
          REGLGC_ERR_IO);
    fs::remove(path);
}

TEST_CASE("pipeline run through the c surface") {
    const fs::path dir = fs::temp_directory_path() / "reglgc_capi_run";
    fs::remove_all(dir);
    const std::string config = "simulate.kind = copula\nsimulate.family = gaussian\n"
                               "simulate.param = 0.3\nsimulate.n = 25\nseed = 2\noutput.path = " +
                               (dir / "out.csv").string() + "\n";
    fs::create_directories(dir);
    char* summary = nullptr;
    REQUIRE(reglgc_run("simulate", config.c_str(), &summary) == REGLGC_OK);
    REQUIRE(summary != nullptr);
    CHECK(std::string(summary).find("25") != std::string::npos);
    reglgc_string_free(summary);
    CHECK(fs::exists(dir / "out.csv"));

    CHECK(reglgc_run("nope", "", &summary) == REGLGC_ERR_VALIDATION);
    CHECK(reglgc_run(nullptr, "", &summary) == REGLGC_ERR_VALIDATION);
    fs::remove_all(dir);
}
