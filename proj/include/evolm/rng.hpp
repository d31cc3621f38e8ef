#pragma once

#include <cstdint>
#include <vector>

namespace evolm {

// Deterministic xoshiro256++ generator. Every random choice in the project
// flows through this class so that runs are byte-reproducible from a seed,
// independent of the standard library's distribution implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform double in [0, 1).
    double uniform();

    // Standard normal via Box-Muller (two draws per call, no cached spare).
    double normal();

    // Uniform integer in [0, n). n must be positive.
    std::int64_t below(std::int64_t n);

    // Derived stream that is a pure function of (seed, tag); independent of
    // how much this generator has been consumed.
    Rng fork(std::uint64_t tag) const;

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<std::size_t>(i)],
                      v[static_cast<std::size_t>(below(i + 1))]);
        }
    }

    static std::uint64_t mix(std::uint64_t a, std::uint64_t b);

  private:
    std::uint64_t state_[4];
    std::uint64_t seed_;
};

}  // namespace evolm
