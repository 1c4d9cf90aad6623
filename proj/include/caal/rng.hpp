#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace caal {

// splitmix64 finalizer. Used to derive independent stream seeds from a base
// seed plus tags (round index, member index, purpose).
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a = 0, std::uint64_t b = 0) {
  return mix64(mix64(mix64(base) ^ a) ^ b);
}

// Seeded generator with hand-rolled uniform/normal mappings. mt19937_64 raw
// output is standardized, and avoiding std::*_distribution keeps draws
// bit-identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller from two fresh raw draws per call; no cached spare, so the
  // stream position is a pure function of the call count.
  double normal() {
    const double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // Modulo bias is ~n / 2^64, far below anything observable here.
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace caal
