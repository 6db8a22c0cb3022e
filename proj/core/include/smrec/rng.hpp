#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace smrec {

// Deterministic random stream.  std::mt19937_64 supplies raw bits; the
// uniform and gaussian transforms are spelled out here so that a given seed
// produces the same draws on every standard-library implementation.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // inclusive bounds
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(gen_() % span);
  }

  // standard normal via Box-Muller; consumes two uniforms per call
  double gaussian() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double gaussian(double mean, double std) { return mean + std * gaussian(); }

 private:
  std::mt19937_64 gen_;
};

// splitmix64 mix of a base seed and a stream id, so module-level streams
// derived from one scenario seed stay decorrelated.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream_id) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream_id + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace smrec
