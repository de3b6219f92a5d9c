#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fpaccel {

/// Seeded random stream used by the synthetic problem generator.
///
/// The core engine is std::mt19937_64, whose output sequence is fixed by
/// the standard, so identical seeds give identical streams on every
/// platform. Uniform and normal draws are derived here by hand (53-bit
/// mantissa scaling and Box-Muller) instead of through the standard
/// distributions, whose output is implementation-defined.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform draw in [0, 1) with 53 random mantissa bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal draw via Box-Muller; generates pairs and caches the
  /// second value.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();  // log(0) guard
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.283185307179586476925286766559;
    spare_ = mag * std::sin(two_pi * u2);
    has_spare_ = true;
    return mag * std::cos(two_pi * u2);
  }

private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fpaccel
