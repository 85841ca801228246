#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "sanlab/errors.hpp"

namespace sanlab {

// One seedable 64-bit generator drives all randomness. mt19937_64's raw
// stream is pinned by the C++ standard; the distributions below are
// hand-rolled so that a seed fully determines a run regardless of the
// standard library version.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t u64() { return engine_(); }

  // Uniform in [0, 1), 53 bits of mantissa.
  double uniform() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  // Box-Muller with a cached spare.
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    const double two_pi = 6.283185307179586;
    double u = 1.0 - uniform();  // (0, 1], keeps log finite
    double v = uniform();
    double r = std::sqrt(-2.0 * std::log(u));
    spare_ = r * std::sin(two_pi * v);
    has_spare_ = true;
    return mean + stddev * r * std::cos(two_pi * v);
  }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw DataError("rng: below(0)");
    std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
    std::uint64_t x;
    do {
      x = u64();
    } while (x >= limit);
    return x % n;
  }

  int below_int(int n) { return static_cast<int>(below(static_cast<std::uint64_t>(n))); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices from [0, n), in draw order.
  std::vector<int> sample(int n, int k) {
    if (k < 0 || k > n) throw DataError("rng: sample k out of range");
    std::vector<int> pool(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      std::size_t j = static_cast<std::size_t>(below(pool.size()));
      out.push_back(pool[j]);
      pool[j] = pool.back();
      pool.pop_back();
    }
    return out;
  }

  // Derived stream, independent of this generator's consumption so far.
  Rng child(std::string_view tag) const {
    std::uint64_t h = 0xcbf29ce484222325ull ^ seed_;
    for (char c : tag) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    return Rng(h);
  }

  Rng child(std::string_view tag, std::uint64_t index) const {
    return child(tag).child_index(index);
  }

 private:
  Rng child_index(std::uint64_t index) const {
    std::uint64_t h = seed_ + 0x9e3779b97f4a7c15ull * (index + 1);
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ull;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebull;
    h ^= h >> 31;
    return Rng(h);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sanlab
