#pragma once

#include <array>
#include <cstdint>

namespace reglgc {

// xoshiro256++ with splitmix64 seeding. Hand-rolled so that simulated draws
// are bit-identical across platforms and standard library versions; the
// std::random distributions make no such guarantee.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    // Independent generator for parallel unit `stream_id` under a common
    // `seed`. Streams with distinct ids never share state.
    static Rng stream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t next_u64();

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform();
    // Uniform on (0, 1), safe as a log/pow argument.
    double uniform_pos();
    // Unbiased integer on [0, n), n >= 1.
    std::uint64_t below(std::uint64_t n);

    double normal();  // standard normal, Marsaglia polar
    double exponential();
    // Gamma(shape, 1), Marsaglia-Tsang; valid for all shape > 0.
    double gamma(double shape);
    // Positive stable with Laplace transform exp(-s^alpha), 0 < alpha < 1
    // (Chambers-Mallows-Stuck).
    double positive_stable(double alpha);

  private:
    std::array<std::uint64_t, 4> state_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace reglgc
