#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace vdt {

/// Deterministic random stream. Wraps mt19937_64 but defines its own
/// uniform/normal mappings so that sequences are identical across platforms
/// and standard-library versions.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : gen_(seed) {}

    /// Sub-stream derived from (this seed, label). Streams with different
    /// labels are independent regardless of draw order on the parent.
    static Rng stream(uint64_t seed, const std::string& label);

    uint64_t next_u64() { return gen_(); }

    /// Uniform in [0,1).
    double uniform();
    /// Uniform in [lo,hi).
    double uniform(double lo, double hi);
    /// Standard normal via Box-Muller (no cached spare: one draw, two u64s).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    /// Uniform integer in [lo,hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi);

    void fill_normal(double* out, int64_t n, double mean = 0.0, double stddev = 1.0);
    void fill_uniform(double* out, int64_t n, double lo = 0.0, double hi = 1.0);

    /// Serialize / restore the full engine state (for checkpoints).
    std::string state() const;
    void set_state(const std::string& s);

private:
    std::mt19937_64 gen_;
};

/// FNV-1a 64-bit hash of a byte string; used for seed derivation and
/// content identity (config hash, garment source hash).
uint64_t fnv1a(const void* data, size_t n, uint64_t basis = 1469598103934665603ull);
uint64_t fnv1a(const std::string& s);

}  // namespace vdt
