#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace r3d {

// Counter-based random numbers built on splitmix64. Everything here is
// self-contained so that streams are bit-identical across platforms and
// independent of evaluation order, which keeps parallel runs reproducible.

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  return mix64(state);
}

// Hash-chains the parts into one stream key.
inline std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243F6A8885A308D3ULL;
  for (std::uint64_t p : parts) h = mix64(h + 0x9E3779B97F4A7C15ULL + p);
  return h;
}

// Stream domain tags, arbitrary fixed constants.
inline constexpr std::uint64_t kTagData = 0xA5C1E7D309B4F261ULL;
inline constexpr std::uint64_t kTagXi = 0x6E2B8D1C4F7A9E35ULL;
inline constexpr std::uint64_t kTagOracle = 0x1F8E6B2A9D4C7053ULL;
inline constexpr std::uint64_t kTagTest = 0x7D3A95E1C6B08F42ULL;

class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : state_(key) {}

  static RngStream keyed(std::initializer_list<std::uint64_t> parts) {
    return RngStream(stream_key(parts));
  }

  // Strictly inside (0,1).
  double uniform01() {
    return (static_cast<double>(splitmix64(state_) >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller pair, second value cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  double exponential(double rate) { return -std::log(uniform01()) / rate; }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// One standard normal keyed by (seed, b, i); stateless so bootstrap replicates
// can skip units and still agree with any other evaluation order.
inline double multiplier_xi(std::uint64_t seed, std::uint64_t b, std::uint64_t i) {
  std::uint64_t s = stream_key({seed, kTagXi, b, i});
  const double u1 = (static_cast<double>(splitmix64(s) >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = (static_cast<double>(splitmix64(s) >> 11) + 0.5) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace r3d
