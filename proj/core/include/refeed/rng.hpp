#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

// Philox4x32-10 counter-based generator. Substreams are addressed by
// (seed, kind, index): the 64-bit seed is the cipher key, kind and
// index live in the counter's high words. Any entity's stream is
// reproducible in isolation, so generation order never matters —
// that's what makes synthetic datasets byte-identical regardless of
// how the work is scheduled.

namespace refeed {

class Philox {
public:
  Philox(std::uint64_t seed, std::uint32_t kind, std::uint64_t index)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        prefix_{kind, static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)} {}

  std::uint32_t next_u32() {
    if (pos_ == 4) {
      block_ = encrypt(block_counter_++);
      pos_ = 0;
    }
    return block_[pos_++];
  }

  // 53-bit uniform in [0, 1).
  double next_double() {
    const std::uint64_t hi = next_u32(), lo = next_u32();
    return static_cast<double>(((hi << 32) | lo) >> 11) * 0x1.0p-53;
  }

  // Box-Muller, pairs cached.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double(), u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));  // 1-u1 in (0,1]
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

private:
  std::array<std::uint32_t, 4> encrypt(std::uint32_t block) const {
    std::array<std::uint32_t, 4> ctr{block, prefix_[0], prefix_[1], prefix_[2]};
    std::uint32_t k0 = key_[0], k1 = key_[1];
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = 0xD2511F53ull * ctr[0];
      const std::uint64_t p1 = 0xCD9E8D57ull * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k0,
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k1,
             static_cast<std::uint32_t>(p0)};
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    return ctr;
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 3> prefix_;
  std::array<std::uint32_t, 4> block_{};
  std::uint32_t block_counter_ = 0;
  int pos_ = 4;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace refeed
