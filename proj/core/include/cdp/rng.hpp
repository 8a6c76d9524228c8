#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace cdp {

// 64-bit FNV-1a. Used for seed derivation and artifact hashing, so its output
// must never change.
constexpr std::uint64_t fnv1a(std::string_view bytes,
                              std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Per-stage seed: the stage name hash is mixed into the global seed.
constexpr std::uint64_t derive_seed(std::uint64_t global_seed,
                                    std::string_view stage) noexcept {
  return splitmix64(global_seed ^ fnv1a(stage));
}

// Thin wrapper over mt19937_64. The standard distributions are
// implementation-defined, so uniform/normal draws are derived from raw engine
// output here to keep generated data identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, bound). Lemire-style rejection, unbiased.
  std::uint64_t below(std::uint64_t bound);

  // Standard normal via Box-Muller; caches the second variate.
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cdp
