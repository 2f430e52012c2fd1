#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace cgflow {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic substream seed: substream k of master seed s is independent
// of every other (s, k) pair in practice.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1));
}

// Seeded generator wrapper. All sampling goes through uniform bits so runs
// are reproducible for a fixed seed regardless of library distribution
// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t bits() { return engine_(); }

  // uniform on [0, 1)
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller; two uniforms per draw, no cached state.
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // uniform integer in [0, n)
  std::size_t index(std::size_t n) {
    const auto k = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cgflow
