#pragma once

// Reproducible random streams.
//
// A stream is identified by a 64-bit key. Child streams are derived from
// the parent key and an index only, never from generator state, so the
// draws of replicate b are the same no matter which thread produces them
// or in which order replicates are scheduled.

#include <array>
#include <cstdint>
#include <limits>

namespace hcdpi {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t mix_key(std::uint64_t key, std::uint64_t index) noexcept {
  std::uint64_t s = key ^ (0xd1b54a32d192ed03ULL * (index + 1));
  splitmix64(s);
  return splitmix64(s);
}

/// xoshiro256** 1.0 (Blackman & Vigna).
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed = 0) noexcept { reseed(seed); }

  void reseed(std::uint64_t seed) noexcept {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }
  std::array<std::uint64_t, 4> s_{};
};

/// A keyed random stream. Satisfies UniformRandomBitGenerator.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed, std::uint64_t index = 0) noexcept
      : key_(mix_key(seed, index)), engine_(key_) {}

  /// Independent child stream; depends only on this stream's key and index.
  RngStream substream(std::uint64_t index) const noexcept {
    return RngStream(key_, index);
  }

  std::uint64_t key() const noexcept { return key_; }

  static constexpr result_type min() noexcept { return Xoshiro256::min(); }
  static constexpr result_type max() noexcept { return Xoshiro256::max(); }
  result_type operator()() noexcept { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
  Xoshiro256 engine_;
};

}  // namespace hcdpi
