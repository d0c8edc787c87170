// Copyright scfi contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#ifndef SCFI_PRINCE_HPP_
#define SCFI_PRINCE_HPP_

#include <array>
#include <cstdint>
#include <stdexcept>

namespace scfi::prince {

using Block64 = uint64_t;

// 128-bit cipher key k0 || k1. The output whitening key k0' is derived, never
// stored.
struct PrinceKey {
  uint64_t k0 = 0;
  uint64_t k1 = 0;

  friend bool operator==(const PrinceKey &, const PrinceKey &) = default;
};

// Only two datapath configurations exist: the 12-round reference cipher (used
// for vector validation) and the 5-round reduced variant modeling the flash
// scrambling unit (2 forward rounds, middle layer, 2 backward rounds).
enum class RoundConfig { kFull12, kReduced5 };

struct ScrambleParams {
  PrinceKey key;
  uint64_t range_lo = 0;  // byte address, 8-byte aligned
  uint64_t range_hi = 0;  // byte address, 8-byte aligned, inclusive
  RoundConfig rounds = RoundConfig::kReduced5;

  void validate() const {
    if (range_lo > range_hi) throw std::invalid_argument("range_lo > range_hi");
    if ((range_lo | range_hi) & 7)
      throw std::invalid_argument("scramble range bounds must be 8-byte aligned");
  }
};

namespace detail {

inline constexpr std::array<uint8_t, 16> kSbox = {0xb, 0xf, 0x3, 0x2, 0xa, 0xc,
                                                  0x9, 0x1, 0x6, 0x7, 0x8, 0x0,
                                                  0xe, 0x5, 0xd, 0x4};

inline constexpr std::array<uint8_t, 16> kSboxInv = []() {
  std::array<uint8_t, 16> inv{};
  for (int i = 0; i < 16; ++i) inv[kSbox[i]] = static_cast<uint8_t>(i);
  return inv;
}();

inline constexpr std::array<uint64_t, 12> kRoundConst = {
    0x0000000000000000ULL, 0x13198a2e03707344ULL, 0xa4093822299f31d0ULL,
    0x082efa98ec4e6c89ULL, 0x452821e638d01377ULL, 0xbe5466cf34e90c6cULL,
    0x7ef84f78fd955cb1ULL, 0x85840851f1ac43aaULL, 0xc882d32f25323c54ULL,
    0x64a51195e0e3610dULL, 0xd3b5a399ca0c2399ULL, 0xc0ac29b7c97c50ddULL,
};

inline constexpr uint64_t kAlpha = 0xc0ac29b7c97c50ddULL;

// Nibble index 0 is the most significant nibble (bits 63..60).
inline constexpr uint64_t sub_nibbles(uint64_t s,
                                      const std::array<uint8_t, 16> &box) {
  uint64_t out = 0;
  for (int i = 0; i < 16; ++i) {
    out |= static_cast<uint64_t>(box[(s >> (4 * i)) & 0xf]) << (4 * i);
  }
  return out;
}

// The M-hat 16x16 binary matrices are generated from the four 4x4 building
// blocks m_k (identity with diagonal element k zeroed). Row j of block row r
// and block column c uses m_{(r+c) mod 4} for M-hat-0 and m_{(r+c+1) mod 4}
// for M-hat-1. Bit 15 of a row mask is the first (most significant) element.
inline constexpr std::array<uint16_t, 16> make_mhat(int shift) {
  std::array<uint16_t, 16> rows{};
  for (int j = 0; j < 16; ++j) {
    int r = j / 4;
    int jr = j % 4;
    uint16_t row = 0;
    for (int c = 0; c < 4; ++c) {
      int idx = (r + c + shift) % 4;
      if (jr != idx) row |= static_cast<uint16_t>(1u << (15 - (c * 4 + jr)));
    }
    rows[j] = row;
  }
  return rows;
}

inline constexpr std::array<uint16_t, 16> kMhat0 = make_mhat(0);
inline constexpr std::array<uint16_t, 16> kMhat1 = make_mhat(1);

inline constexpr uint16_t mat16(const std::array<uint16_t, 16> &m, uint16_t v) {
  uint16_t out = 0;
  for (int j = 0; j < 16; ++j) {
    uint16_t t = static_cast<uint16_t>(m[j] & v);
    // parity
    t ^= t >> 8;
    t ^= t >> 4;
    t ^= t >> 2;
    t ^= t >> 1;
    if (t & 1) out |= static_cast<uint16_t>(1u << (15 - j));
  }
  return out;
}

// M': diag(M-hat-0, M-hat-1, M-hat-1, M-hat-0), an involution.
inline constexpr uint64_t m_prime(uint64_t s) {
  uint16_t c0 = mat16(kMhat0, static_cast<uint16_t>(s >> 48));
  uint16_t c1 = mat16(kMhat1, static_cast<uint16_t>(s >> 32));
  uint16_t c2 = mat16(kMhat1, static_cast<uint16_t>(s >> 16));
  uint16_t c3 = mat16(kMhat0, static_cast<uint16_t>(s));
  return (static_cast<uint64_t>(c0) << 48) | (static_cast<uint64_t>(c1) << 32) |
         (static_cast<uint64_t>(c2) << 16) | c3;
}

// AES-style ShiftRows on the 16 nibbles, nibble 0 most significant.
inline constexpr std::array<int, 16> kShiftRows = {0, 5, 10, 15, 4, 9,  14, 3,
                                                   8, 13, 2, 7,  12, 1, 6,  11};
inline constexpr std::array<int, 16> kShiftRowsInv = []() {
  std::array<int, 16> inv{};
  for (int i = 0; i < 16; ++i) inv[kShiftRows[i]] = i;
  return inv;
}();

inline constexpr uint64_t permute_nibbles(uint64_t s,
                                          const std::array<int, 16> &perm) {
  uint64_t out = 0;
  for (int i = 0; i < 16; ++i) {
    uint64_t nib = (s >> (4 * (15 - perm[i]))) & 0xf;
    out |= nib << (4 * (15 - i));
  }
  return out;
}

inline constexpr int forward_rounds(RoundConfig cfg) {
  return cfg == RoundConfig::kFull12 ? 5 : 2;
}

inline constexpr uint64_t whitening_out(uint64_t k0) {
  return ((k0 >> 1) | (k0 << 63)) ^ (k0 >> 63);
}

}  // namespace detail

inline Block64 encrypt(Block64 block, const PrinceKey &key, RoundConfig cfg) {
  using namespace detail;
  const int n = forward_rounds(cfg);
  uint64_t s = block ^ key.k0;
  s ^= key.k1 ^ kRoundConst[0];
  for (int i = 1; i <= n; ++i) {
    s = sub_nibbles(s, kSbox);
    s = m_prime(s);
    s = permute_nibbles(s, kShiftRows);
    s ^= kRoundConst[i] ^ key.k1;
  }
  s = sub_nibbles(s, kSbox);
  s = m_prime(s);
  s = sub_nibbles(s, kSboxInv);
  for (int i = 11 - n; i <= 10; ++i) {
    s ^= kRoundConst[i] ^ key.k1;
    s = permute_nibbles(s, kShiftRowsInv);
    s = m_prime(s);
    s = sub_nibbles(s, kSboxInv);
  }
  s ^= kRoundConst[11] ^ key.k1;
  return s ^ whitening_out(key.k0);
}

// Structural inverse of encrypt (not the alpha-reflection shortcut, so the
// reflection identity can be tested as a genuine property).
inline Block64 decrypt(Block64 block, const PrinceKey &key, RoundConfig cfg) {
  using namespace detail;
  const int n = forward_rounds(cfg);
  uint64_t s = block ^ whitening_out(key.k0);
  s ^= kRoundConst[11] ^ key.k1;
  for (int i = 10; i >= 11 - n; --i) {
    s = sub_nibbles(s, kSbox);
    s = m_prime(s);
    s = permute_nibbles(s, kShiftRows);
    s ^= kRoundConst[i] ^ key.k1;
  }
  s = sub_nibbles(s, kSbox);
  s = m_prime(s);
  s = sub_nibbles(s, kSboxInv);
  for (int i = n; i >= 1; --i) {
    s ^= kRoundConst[i] ^ key.k1;
    s = permute_nibbles(s, kShiftRowsInv);
    s = m_prime(s);
    s = sub_nibbles(s, kSboxInv);
  }
  s ^= kRoundConst[0] ^ key.k1;
  return s ^ key.k0;
}

inline constexpr uint64_t alpha_constant() { return detail::kAlpha; }

// Tweak injection: inside [range_lo, range_hi] the zero-extended tweak is
// XORed into k1; outside, the base key is used unchanged (tweak forced to 0).
inline PrinceKey effective_key(const PrinceKey &base, uint32_t tweak,
                               uint64_t addr, const ScrambleParams &params) {
  if (addr & 7) throw std::invalid_argument("effective_key: unaligned address");
  if (addr < params.range_lo || addr > params.range_hi) return base;
  return PrinceKey{base.k0, base.k1 ^ static_cast<uint64_t>(tweak)};
}

}  // namespace scfi::prince

#endif  // SCFI_PRINCE_HPP_
