#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gtlcirl {

// splitmix64 finalizer, used to decorrelate derived seeds.
inline std::uint64_t mix64(std::uint64_t z)
{
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL)
{
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seeded random stream with platform-independent draws.
///
/// The standard distributions are implementation-defined, so uniform and
/// integer draws are computed directly from the mt19937_64 output, which the
/// standard does pin down.
class Rng
{
public:
  explicit Rng(std::uint64_t seed = 0) : engine_(mix64(seed)) {}

  /// Child stream for a labeled component, e.g. derive(seed, "policy").
  static Rng derive(std::uint64_t seed, std::string_view label)
  {
    return Rng(derive_seed(seed, label));
  }

  static std::uint64_t derive_seed(std::uint64_t seed, std::string_view label)
  {
    return mix64(seed ^ fnv1a64(label));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling avoids modulo bias.
  std::uint64_t uniform_int(std::uint64_t n)
  {
    if (n <= 1)
      return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

private:
  std::mt19937_64 engine_;
};

} // namespace gtlcirl
