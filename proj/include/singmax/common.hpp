#ifndef SINGMAX_COMMON_HPP
#define SINGMAX_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace singmax {

// Bad user input: mesh/config/regime parameters that violate a precondition.
class config_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// An iteration failed to converge; message carries the last residual.
class solver_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A structural invariant that should hold by construction was violated.
class invariant_error : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// Deterministic RNG wrapper; uniform() derives doubles from raw bits so the
// stream does not depend on library distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() { return (gen_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double log_uniform(double lo, double hi) {
        return std::exp(uniform(std::log(lo), std::log(hi)));
    }
    std::uint64_t bits() { return gen_(); }

private:
    std::mt19937_64 gen_;
};

// FNV-1a, used to key oracle cache files.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace singmax

#endif
