#ifndef BSODA_SIMULATOR_RNG_HPP
#define BSODA_SIMULATOR_RNG_HPP

#include <cstdint>
#include <random>

namespace bsoda {

/// Seedable 64-bit generator (mt19937_64) with deterministic stream
/// splitting: split(k) derives an independent child seeded from the parent
/// seed and k through SplitMix64, without advancing the parent.
class Rng {
 public:
  using result_type = std::mt19937_64::result_type;

  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }
  Rng split(std::uint64_t stream) const;

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform();
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  static std::uint64_t mix(std::uint64_t x);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace bsoda

#endif  // BSODA_SIMULATOR_RNG_HPP
