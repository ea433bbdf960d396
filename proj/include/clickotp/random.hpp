#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <mutex>
#include <random>
#include <span>
#include <string>

#include <openssl/rand.h>

#include "clickotp/error.hpp"

namespace clickotp {

/// Source of randomness used by every stochastic operation (OTP digits,
/// decoy picks, challenge shuffles, identifiers).
///
/// Implementations only need next_u64(); below() is virtual so test stubs
/// can pin exact outcomes (for example "always the minimum").
class RandomSource {
 public:
  virtual ~RandomSource() = default;

  virtual std::uint64_t next_u64() = 0;

  /// Uniform integer in [0, bound). Rejection sampling keeps it unbiased and
  /// identical across standard libraries, unlike std::uniform_int_distribution.
  virtual std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) fail(ErrorCode::Domain, "below(0)");
    constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = kMax - (kMax % bound + 1) % bound;
    for (;;) {
      const std::uint64_t x = next_u64();
      if (x <= limit) return x % bound;
    }
  }

  /// Uniform integer in [lo, hi].
  std::uint32_t uniform(std::uint32_t lo, std::uint32_t hi) {
    return lo + static_cast<std::uint32_t>(below(std::uint64_t{hi} - lo + 1));
  }

  /// 128-bit random token rendered as 32 lowercase hex characters.
  std::string hex_token() {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(32);
    for (int word = 0; word < 2; ++word) {
      std::uint64_t v = next_u64();
      for (int i = 0; i < 16; ++i) {
        out.push_back(kHex[v & 0xF]);
        v >>= 4;
      }
    }
    return out;
  }
};

/// Deterministic generator for simulations and golden tests.
class SeededRandom final : public RandomSource {
 public:
  explicit SeededRandom(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next_u64() override { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Operating-system CSPRNG (through OpenSSL); used for production OTPs and
/// session identifiers.
class SystemRandom final : public RandomSource {
 public:
  std::uint64_t next_u64() override {
    std::array<unsigned char, 8> buf{};
    if (RAND_bytes(buf.data(), static_cast<int>(buf.size())) != 1) {
      fail(ErrorCode::Config, "RAND_bytes failed");
    }
    std::uint64_t v = 0;
    for (unsigned char b : buf) v = (v << 8) | b;
    return v;
  }
};

/// Serializes access to another source so concurrent request handlers can
/// share one stream.
class SynchronizedRandom final : public RandomSource {
 public:
  explicit SynchronizedRandom(RandomSource& inner) : inner_(inner) {}

  std::uint64_t next_u64() override {
    std::lock_guard lock(mutex_);
    return inner_.next_u64();
  }
  std::uint64_t below(std::uint64_t bound) override {
    std::lock_guard lock(mutex_);
    return inner_.below(bound);
  }

 private:
  RandomSource& inner_;
  std::mutex mutex_;
};

/// SplitMix64 step; derives independent worker seeds from one user seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Fisher-Yates shuffle driven by a RandomSource.
template <class T>
void shuffle(std::span<T> items, RandomSource& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace clickotp
