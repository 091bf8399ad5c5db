#include "reptransfer/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace reptransfer {

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

namespace {
std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}
}  // namespace

Rng Rng::stream(std::uint64_t master, std::string_view name, std::uint64_t index) {
    std::uint64_t x = master ^ fnv1a64(name);
    x ^= 0x6a09e667f3bcc909ull + index * 0x9e3779b97f4a7c15ull;
    splitmix64(x);
    return Rng(splitmix64(x));
}

Rng Rng::split(std::string_view name, std::uint64_t index) {
    return Rng::stream(next_u64(), name, index);
}

int Rng::uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    int k = static_cast<int>(uniform() * n);
    return k < n ? k : n - 1;
}

int Rng::categorical(const double* probs, int n) {
    if (n <= 0) throw std::invalid_argument("categorical: empty support");
    double u = uniform();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return n - 1;
}

int Rng::categorical(const std::vector<double>& probs) {
    return categorical(probs.data(), static_cast<int>(probs.size()));
}

double Rng::gaussian(double sigma) {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace reptransfer
