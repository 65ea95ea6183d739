#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace qrs {

/// SplitMix64 finalizer; used to derive independent stream seeds from
/// (seed, stream id) so results do not depend on evaluation order.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

/// 64-bit Mersenne Twister with portable variate generation (the standard
/// distributions are implementation-defined, these are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng for_stream(std::uint64_t seed, std::uint64_t stream) {
    return Rng(stream_seed(seed, stream));
  }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Exponential with unit mean.
  double exponential() { return -std::log(uniform()); }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace qrs
