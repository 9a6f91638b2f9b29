#pragma once

#include <sodium.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <string>
#include <string_view>

#include "curvemark/core.hpp"

// Keyed deterministic randomness.
//
// Stream algorithm (fixed; patterns depend on it bit-for-bit):
//   * ChaCha20 (IETF variant, RFC 8439) keyed by the 256-bit seed.
//   * 96-bit nonce = little-endian u32 triple (domain, a, b). Block counter
//     starts at 0.
//   * Each 8 consecutive keystream bytes form a little-endian u64 x;
//     uniform u = ((x >> 11) + 1) * 2^-53, so u lies in (0, 1].
//   * Normals come in Box-Muller pairs from two uniforms (u1, u2):
//     sqrt(-2 ln u1) * cos(2 pi u2), then sqrt(-2 ln u1) * sin(2 pi u2).
namespace curvemark {

inline void ensure_sodium() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw Error("libsodium initialisation failed");
}

struct Seed256 {
  std::array<std::uint8_t, 32> bytes{};

  std::string hex() const {
    std::string out(64, '0');
    static constexpr char digits[] = "0123456789abcdef";
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      out[2 * i] = digits[bytes[i] >> 4];
      out[2 * i + 1] = digits[bytes[i] & 0xF];
    }
    return out;
  }

  static Seed256 from_hex(std::string_view hex) {
    if (hex.size() != 64) throw InvalidArgument("seed must be 64 hex digits (256 bits)");
    Seed256 s;
    auto nibble = [](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      return -1;
    };
    for (std::size_t i = 0; i < 32; ++i) {
      int hi = nibble(hex[2 * i]), lo = nibble(hex[2 * i + 1]);
      if (hi < 0 || lo < 0) throw InvalidArgument("seed contains a non-hex character");
      s.bytes[i] = static_cast<std::uint8_t>(hi << 4 | lo);
    }
    return s;
  }

  static Seed256 random() {
    ensure_sodium();
    Seed256 s;
    randombytes_buf(s.bytes.data(), s.bytes.size());
    return s;
  }

  friend bool operator==(const Seed256&, const Seed256&) = default;
};

namespace detail {
inline void put_u32(std::uint8_t* dst, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) dst[i] = static_cast<std::uint8_t>(v >> (8 * i));
}
inline void put_u64(std::uint8_t* dst, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) dst[i] = static_cast<std::uint8_t>(v >> (8 * i));
}
}  // namespace detail

// BLAKE2b over a domain tag and a list of integers.
inline void keyed_hash(std::uint8_t* out, std::size_t out_len, const Seed256* seed,
                       std::string_view tag, std::initializer_list<std::uint64_t> words) {
  ensure_sodium();
  crypto_generichash_state st;
  crypto_generichash_init(&st, nullptr, 0, out_len);
  if (seed) crypto_generichash_update(&st, seed->bytes.data(), seed->bytes.size());
  crypto_generichash_update(&st, reinterpret_cast<const unsigned char*>(tag.data()), tag.size());
  for (std::uint64_t w : words) {
    std::uint8_t buf[8];
    detail::put_u64(buf, w);
    crypto_generichash_update(&st, buf, sizeof buf);
  }
  crypto_generichash_final(&st, out, out_len);
}

inline Seed256 derive_seed(const Seed256* base, std::string_view tag,
                           std::initializer_list<std::uint64_t> words) {
  Seed256 s;
  keyed_hash(s.bytes.data(), s.bytes.size(), base, tag, words);
  return s;
}

inline std::string fingerprint(const Seed256& seed, int scale, int direction) {
  std::array<std::uint8_t, 16> h{};
  keyed_hash(h.data(), h.size(), &seed, "curvemark/fingerprint",
             {static_cast<std::uint64_t>(scale), static_cast<std::uint64_t>(direction)});
  std::string out;
  static constexpr char digits[] = "0123456789abcdef";
  for (auto b : h) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xF]);
  }
  return out;
}

// Stream domains. Values are part of the pattern format; do not renumber.
enum class StreamDomain : std::uint32_t {
  kWedgePattern = 1,
  kWhitePattern = 2,
  kAttackNoise = 3,
  kSynthetic = 4,
};

class KeyedStream {
 public:
  KeyedStream(const Seed256& seed, StreamDomain domain, std::uint32_t a, std::uint32_t b)
      : key_(seed) {
    ensure_sodium();
    detail::put_u32(nonce_.data(), static_cast<std::uint32_t>(domain));
    detail::put_u32(nonce_.data() + 4, a);
    detail::put_u32(nonce_.data() + 8, b);
  }

  std::uint64_t next_u64() {
    if (offset_ == block_.size()) refill();
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(block_[offset_ + i]) << (8 * i);
    offset_ += 8;
    return v;
  }

  double next_uniform() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(2.0 * kPi * u2);
    have_spare_ = true;
    return radius * std::cos(2.0 * kPi * u2);
  }

  // Uniform integer in [0, bound) by rejection, no modulo bias.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    for (;;) {
      std::uint64_t x = next_u64();
      if (x < limit) return x % bound;
    }
  }

 private:
  void refill() {
    std::array<std::uint8_t, 64> zeros{};
    crypto_stream_chacha20_ietf_xor_ic(block_.data(), zeros.data(), zeros.size(), nonce_.data(),
                                       counter_++, key_.bytes.data());
    offset_ = 0;
  }

  Seed256 key_;
  std::array<std::uint8_t, 12> nonce_{};
  std::array<std::uint8_t, 64> block_{};
  std::size_t offset_ = 64;
  std::uint32_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Seed for stochastic attacks and other 64-bit-seeded consumers.
inline Seed256 seed_from_u64(std::uint64_t value, std::string_view tag) {
  return derive_seed(nullptr, tag, {value});
}

}  // namespace curvemark
