#pragma once

#include <cstdint>
#include <string_view>

namespace psm {

// SplitMix64-based generator. Deliberately self-contained so that every
// random draw in the project is bit-reproducible across platforms and
// standard-library versions.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    // uniform in [0, 1) with 53 random bits
    double uniform();
    double uniform(double lo, double hi);

    // standard normal via Box-Muller (second value cached)
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // uniform integer in [0, n), n >= 1
    int uniform_int(int n);

  private:
    std::uint64_t state_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

// Seed derivation for independent streams: combine a master seed with tags
// (strings or integers). Used so that e.g. the noise stream of training
// step t is a pure function of (seed, t) and never of consumption history.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t v);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag);

}  // namespace psm
