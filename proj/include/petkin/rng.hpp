#pragma once

#include <cstdint>
#include <random>

namespace petkin {

uint64_t splitmix64(uint64_t x);

// Deterministic random stream. std::mt19937_64 is bit-exact across
// platforms, but the standard <random> distributions are not, so the
// transforms we rely on (uniform, gaussian, poisson) are implemented
// here and consume engine output in a fixed order.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    // Independent stream for a substructure (sample index, frame index, ...).
    // Derivation is position-based so parallel consumers never share state.
    static Rng derive(uint64_t master, uint64_t a, uint64_t b = 0);

    uint64_t next_u64() { return eng_(); }

    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);
    double gaussian();                      // standard normal (Box-Muller)
    double gaussian(double mean, double sigma);
    long long poisson(double mean);

private:
    long long poisson_knuth(double mean);
    long long poisson_ptrs(double mean);

    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace petkin
