#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream family, counter words), so paths can be generated in any
// order and on any number of threads with identical results.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace bdsde {

// Philox4x32 with 10 rounds (Salmon et al., SC'11).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter c, Key k) {
    for (int r = 0; r < 10; ++r) {
      c = round(c, k);
      k[0] += 0x9E3779B9u;
      k[1] += 0xBB67AE85u;
    }
    return c;
  }

 private:
  static Counter round(const Counter& c, const Key& k) {
    const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c[0];
    const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

enum class StreamFamily : std::uint32_t {
  brownian = 1,
  white_noise = 2,
  poisson_n0 = 3,
  poisson_n1 = 4,
  poisson_m = 5,
  scenario = 6,
  cloud = 7,
};

// One independent stream per (family, path, step, channel). Draws within a
// stream are sequential through the fourth counter word.
class Stream {
 public:
  Stream(std::uint64_t seed, StreamFamily family, std::uint32_t path,
         std::uint32_t step, std::uint32_t channel)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32) ^
                 (static_cast<std::uint32_t>(family) * 0x85EBCA6Bu)},
        counter_{path, step, channel, 0} {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    if (cursor_ >= 4) refill();
    const std::uint32_t a = block_[cursor_++];
    const std::uint32_t b = block_[cursor_++];
    return (static_cast<double>(a >> 5) * 67108864.0 + static_cast<double>(b >> 6)) *
           (1.0 / 9007199254740992.0);
  }

  // Uniform on (0, 1].
  double uniform_open_low() { return 1.0 - uniform(); }

  double normal() {
    const double u1 = uniform_open_low();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Inversion by products of uniforms, in chunks so exp(-rate) never
  // underflows.
  std::uint32_t poisson(double rate) {
    std::uint32_t total = 0;
    while (rate > 0.0) {
      const double chunk = rate > 20.0 ? 20.0 : rate;
      rate -= chunk;
      const double limit = std::exp(-chunk);
      double prod = uniform_open_low();
      while (prod > limit) {
        ++total;
        prod *= uniform_open_low();
      }
    }
    return total;
  }

 private:
  void refill() {
    block_ = Philox4x32::generate(counter_, key_);
    ++counter_[3];
    cursor_ = 0;
  }

  Philox4x32::Key key_;
  Philox4x32::Counter counter_;
  Philox4x32::Counter block_{};
  int cursor_ = 4;
};

}  // namespace bdsde
