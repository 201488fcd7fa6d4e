#ifndef MOVSEM_COMMON_HPP
#define MOVSEM_COMMON_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace movsem {

// Error taxonomy maps to CLI exit codes: config=1, data=2, runtime/numeric=3.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ShapeError : NumericError {
    explicit ShapeError(const std::string& msg) : NumericError(msg) {}
};

// splitmix64, used to derive independent RNG streams from (seed, indices).
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t seed_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ a);
    h = mix64(h ^ b);
    h = mix64(h ^ c);
    return h;
}

// Deterministic RNG wrapper. Distribution code is written out explicitly so
// results do not depend on the standard library implementation.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x2545f4914f6cdd1dULL) {}

    std::uint64_t next_u64() {
        // xorshift64*
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dULL;
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        // rejection-free modulo of a 64-bit stream; bias is negligible for n << 2^64
        return n ? next_u64() % n : 0;
    }

    bool bernoulli(double p) { return uniform() < p; }

    double normal() {
        // Box-Muller, one value per call (cached pair intentionally omitted)
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::uint64_t state_;
};

// Chunked parallel map over [0, n). Work item i runs exactly once; with
// threads <= 1 this degenerates to a plain loop. Caller owns determinism:
// fn(i) must not depend on shared mutable state.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (threads <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    unsigned t = std::min<std::size_t>(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(t);
    std::size_t chunk = (n + t - 1) / t;
    for (unsigned w = 0; w < t; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

inline std::string format_shape(const std::vector<int>& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

} // namespace movsem

#endif // MOVSEM_COMMON_HPP
