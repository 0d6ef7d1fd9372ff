// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace survmix {

/// Deterministic random stream keyed by (seed, stream). The same key always
/// reproduces the same draw sequence; distinct stream ids give independent
/// sequences for the same seed, so parallel consumers never share a stream.
///
/// All variate transforms are implemented here (not via std:: distributions,
/// whose output is implementation-defined), so sequences are stable across
/// standard libraries.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream & 0xffffffffu),
                      static_cast<std::uint32_t>(stream >> 32)};
    gen_.seed(seq);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Uniform on (0, 1); never returns 0 or 1.
  double uniform() {
    // 53-bit mantissa; +0.5 keeps the draw strictly inside (0,1).
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1p-53;
  }

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (have_cache_) {
      have_cache_ = false;
      return cache_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cache_ = r * std::sin(theta);
    have_cache_ = true;
    return r * std::cos(theta);
  }

  /// Exponential with the given rate.
  double exponential(double rate) { return -std::log(uniform()) / rate; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 gen_;
  double cache_ = 0.0;
  bool have_cache_ = false;
};

}  // namespace survmix
