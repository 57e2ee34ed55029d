#include "vdt/rng.hpp"

#include <cmath>
#include <sstream>

namespace vdt {

namespace {
constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0;  // 2^-53
constexpr double kPi = 3.14159265358979323846;
}  // namespace

Rng Rng::stream(uint64_t seed, const std::string& label) {
    uint64_t h = fnv1a(label);
    // splitmix-style mix of (seed, label hash)
    uint64_t z = seed + 0x9e3779b97f4a7c15ull + h;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z = z ^ (z >> 31);
    return Rng(z);
}

double Rng::uniform() {
    return static_cast<double>(gen_() >> 11) * kTwoPow53Inv;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    // Box-Muller; u1 in (0,1] to keep log() finite.
    double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * kTwoPow53Inv;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    // rejection sampling to avoid modulo bias
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t x;
    do {
        x = gen_();
    } while (x >= limit);
    return lo + static_cast<int64_t>(x % span);
}

void Rng::fill_normal(double* out, int64_t n, double mean, double stddev) {
    for (int64_t i = 0; i < n; ++i) out[i] = mean + stddev * normal();
}

void Rng::fill_uniform(double* out, int64_t n, double lo, double hi) {
    for (int64_t i = 0; i < n; ++i) out[i] = uniform(lo, hi);
}

std::string Rng::state() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
}

void Rng::set_state(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
}

uint64_t fnv1a(const void* data, size_t n, uint64_t basis) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = basis;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

}  // namespace vdt
