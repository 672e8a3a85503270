#pragma once

// Deterministic random source. mt19937_64 is fully specified by the standard;
// the derived draws below avoid std distributions, whose output is
// implementation-defined, so streams are reproducible everywhere.

#include <cstdint>
#include <random>
#include <vector>

#include "capsrel/matrix.hpp"

namespace capsrel {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // unbiased draw in [0, n) by rejection
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t(0) - ~std::uint64_t(0) % n;
    std::uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return v % n;
  }

  // Fisher-Yates with our own bounded draws (std::shuffle is unspecified).
  template <class V>
  void shuffle(V& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  template <class T>
  void fill_uniform(Mat<T>& m, double lo, double hi) {
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<T>(uniform(lo, hi));
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace capsrel
