#pragma once

#include <cstdint>
#include <string>

#include "reglgc/rng.hpp"
#include "reglgc/series.hpp"

namespace reglgc {

enum class CopulaFamily { clayton, gumbel, gaussian };

CopulaFamily copula_family_from_string(const std::string& name);
std::string to_string(CopulaFamily family);

// A bivariate DGP: copula plus Gaussian marginals.
struct CopulaSpec {
    CopulaFamily family = CopulaFamily::gaussian;
    double param = 0.0;  // Clayton theta > 0, Gumbel theta >= 1, Gaussian rho in (-1, 1)
    double mean_a = 0.0, mean_b = 0.0;
    double sd_a = 1.0, sd_b = 1.0;

    void validate() const;
};

// One draw of copula uniforms (u, v) written to *u, *v.
void sample_copula_uniforms(CopulaFamily family, double param, Rng& rng, double* u, double* v);

// n draws from the DGP appended as raw values through the marginal
// transform x = mean + sd * Phi^{-1}(u).
void sample_into(const CopulaSpec& spec, std::size_t n, Rng& rng, double* out_a, double* out_b);

ReturnSeries sample_copula(const CopulaSpec& spec, std::size_t n, std::uint64_t seed);

// Population Kendall's tau for the family at the given parameter.
double kendall_tau(CopulaFamily family, double param);

}  // namespace reglgc
