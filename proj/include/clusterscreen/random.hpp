#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

namespace clusterscreen {

// splitmix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t hash_tag(std::string_view tag) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives an independent sub-seed from a parent seed and a stream index.
// Sub-seeds depend only on (parent, tag, index), so adding or reordering
// consumers never perturbs another consumer's stream.
inline constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag,
                                           std::uint64_t index = 0) noexcept {
  return mix64(mix64(parent ^ hash_tag(tag)) + index);
}

// Seeded generator with platform-independent uniform draws. The standard
// distributions are implementation-defined, so they are avoided here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % bound;
  }

  // k distinct values from [0, n), in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + below(n - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

 private:
  std::mt19937_64 engine_;
};

// In-place shuffle that reproduces numpy's legacy RandomState(seed).shuffle
// for seeds below 2^32: MT19937 seeded with init_genrand, swap index drawn by
// masked rejection sampling from 32-bit outputs.
template <typename T>
void legacy_numpy_shuffle(std::vector<T>& values, std::uint32_t seed) {
  std::mt19937 mt(seed);
  for (std::size_t i = values.size(); i-- > 1;) {
    const std::uint64_t max = i;
    std::uint64_t mask = max;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    std::uint64_t j;
    if (max <= 0xffffffffULL) {
      while ((j = (mt() & mask)) > max) {
      }
    } else {
      do {
        const std::uint64_t hi = mt();
        const std::uint64_t lo = mt();
        j = ((hi << 32) | lo) & mask;
      } while (j > max);
    }
    std::swap(values[i], values[j]);
  }
}

}  // namespace clusterscreen
