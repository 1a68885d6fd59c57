#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace sora {

// Counter-based deterministic generator. A draw is a pure function of
// (key, counter), so state serializes as two integers and identical seeds
// reproduce identical streams on any platform. Substreams are derived by
// name so modules never share or race a global generator.
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t counter = 0)
        : key_(mix(seed ^ 0x6f4a7c15u)), counter_(counter) {}

    // Independent named substream; the child starts at counter 0.
    Rng fork(std::string_view name) const {
        std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
        for (unsigned char c : name) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        Rng child(0);
        child.key_ = mix(key_ ^ mix(h));
        child.counter_ = 0;
        return child;
    }

    Rng fork(std::string_view name, std::uint64_t index) const {
        Rng child = fork(name);
        child.key_ = mix(child.key_ + 0x9e3779b97f4a7c15ull * (index + 1));
        return child;
    }

    std::uint64_t next_u64() {
        return mix(key_ + 0x9e3779b97f4a7c15ull * ++counter_);
    }

    // [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; consumes two draws, no cached spare.
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform integer in [0, n). Unbiased via rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    int uniform_int(int n) { return static_cast<int>(below(static_cast<std::uint64_t>(n))); }

    bool bernoulli(double p) { return uniform() < p; }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }
    void restore(std::uint64_t key, std::uint64_t counter) {
        key_ = key;
        counter_ = counter;
    }

    template <class Vec>
    void shuffle(Vec& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_;
};

}  // namespace sora
