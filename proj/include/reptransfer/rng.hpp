#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace reptransfer {

// Deterministic random stream. All sampling goes through this wrapper so that
// runs are reproducible byte-for-byte for a given master seed: the standard
// distributions are implementation-defined, the raw engine output is not.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Named stream derived from a master seed. Streams with different names
    // (env-stream, policy-stream, learner-stream, ...) are independent.
    static Rng stream(std::uint64_t master, std::string_view name, std::uint64_t index = 0);

    Rng split(std::string_view name, std::uint64_t index = 0);

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in {0, ..., n-1}.
    int uniform_int(int n);

    // Index sampled from an (approximately normalized) probability vector.
    int categorical(const std::vector<double>& probs);
    int categorical(const double* probs, int n);

    // N(0, sigma^2) via Box-Muller; two uniforms per draw, no cached spare.
    double gaussian(double sigma);

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 gen_;
};

std::uint64_t fnv1a64(std::string_view s);

}  // namespace reptransfer
