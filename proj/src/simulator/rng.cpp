#include "bsoda/simulator/rng.hpp"

#include "bsoda/core/types.hpp"

namespace bsoda {

std::uint64_t Rng::mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(mix(seed_ ^ mix(stream + 0x632BE59BD9B4E019ULL)));
}

double Rng::uniform() {
  // 53 random bits -> exactly representable double in [0, 1).
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() { return normal_(engine_); }

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw ContractError("Rng::index on an empty range");
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

}  // namespace bsoda
