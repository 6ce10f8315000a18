#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace apcsim {

/// FNV-1a, used to derive independent rng stream seeds from string tags.
constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Seeded random stream. Engine state is fully specified by the standard,
/// and all distributions are implemented here explicitly, so identical
/// seeds give identical draws on any platform.
class RngStream {
public:
  RngStream() : RngStream(0, "default") {}
  RngStream(std::uint64_t seed, std::string_view tag) {
    std::uint64_t s = seed ^ fnv1a(tag);
    engine_.seed(splitmix64(s));
  }

  /// Derive an independent child stream. Consumes one draw from this stream.
  RngStream derive(std::string_view tag) {
    RngStream child;
    child.engine_.seed(engine_() ^ fnv1a(tag));
    return child;
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n-1] via rejection (unbiased).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n <= 1) return 0;
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  /// Standard normal via Box-Muller (no cached spare, one draw = two uniforms).
  double normal() {
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform01();
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

private:
  std::mt19937_64 engine_;
};

}  // namespace apcsim
