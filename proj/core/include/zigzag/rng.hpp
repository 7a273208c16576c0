#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace zigzag {

// Seeded xoshiro256++ stream. Streams derived from the same seed with
// different stream ids are decorrelated, and all draws are computed from raw
// 64-bit words so that a (seed, stream) pair reproduces the same sequence on
// any platform. Trace determinism relies on this.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0) {
    // splitmix64 expansion of (seed, stream) into the xoshiro state.
    std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    for (auto& word : state_) {
      x += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      word = z ^ (z >> 31);
    }
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1).
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  // Exponential waiting time; +inf when the rate vanishes.
  double exponential(double rate) {
    if (rate <= 0.0) return std::numeric_limits<double>::infinity();
    return -std::log(uniform_pos()) / rate;
  }

  // Box-Muller; consumes exactly two uniforms per draw.
  double normal(double mean, double sd) {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return mean + sd * std::sqrt(-2.0 * std::log(u1)) *
                      std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform on {0, ..., n-1}.
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
};

}  // namespace zigzag
