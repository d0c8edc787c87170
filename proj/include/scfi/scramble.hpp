// Copyright scfi contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#ifndef SCFI_SCRAMBLE_HPP_
#define SCFI_SCRAMBLE_HPP_

#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "scfi/instrument.hpp"
#include "scfi/metadata.hpp"
#include "scfi/prince.hpp"

namespace scfi::scramble {

struct FlashImage {
  std::map<uint64_t, uint64_t> word_map;  // 8-byte-aligned addr -> ciphertext
  prince::ScrambleParams params;

  friend bool operator==(const FlashImage &a, const FlashImage &b) {
    return a.word_map == b.word_map;
  }
};

class ScrambleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Encrypts each 64-bit word under effective_key(key, tweak-of-block, addr).
// Words inside the scramble range must be covered by exactly one metadata
// block; words outside go through the tweak-0 path (plain base key).
inline FlashImage build_flash(const instrument::MemoryImage &img,
                              const meta::MetadataFile &m,
                              const prince::ScrambleParams &params) {
  params.validate();
  std::map<uint64_t, uint32_t> tweak_of;
  for (const auto &f : m.funcs) {
    for (const auto &[off, tw] : f.blocks) {
      auto [it, fresh] = tweak_of.emplace(f.start + off, tw);
      if (!fresh)
        throw ScrambleError("overlapping metadata blocks at 0x" +
                            [&] { std::ostringstream os; os << std::hex << f.start + off; return os.str(); }());
    }
  }

  FlashImage out;
  out.params = params;
  for (const auto &[addr, plain] : img) {
    uint32_t tweak = 0;
    if (addr >= params.range_lo && addr <= params.range_hi) {
      auto it = tweak_of.find(addr);
      if (it == tweak_of.end()) {
        std::ostringstream os;
        os << std::hex << addr;
        throw ScrambleError("code word at 0x" + os.str() +
                            " inside scramble range has no metadata block");
      }
      tweak = it->second;
    }
    auto key = prince::effective_key(params.key, tweak, addr, params);
    out.word_map[addr] = prince::encrypt(plain, key, params.rounds);
  }
  return out;
}

// VMEM text: one `@<addr/8 hex> <16-hex-digit word>` line per word, sorted
// ascending. The address field is in 64-bit word units.
inline std::string emit_vmem(const FlashImage &f) {
  std::ostringstream os;
  os << std::hex << std::nouppercase;
  for (const auto &[addr, word] : f.word_map) {
    os << "@";
    os.width(8);
    os.fill('0');
    os << (addr >> 3) << " ";
    os.width(16);
    os.fill('0');
    os << word << "\n";
  }
  return os.str();
}

class VmemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline FlashImage parse_vmem(const std::string &text,
                             const prince::ScrambleParams &params) {
  FlashImage out;
  out.params = params;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  uint64_t prev_addr = 0;
  bool first = true;
  auto fail = [&](const std::string &m) {
    throw VmemError("line " + std::to_string(lineno) + ": " + m);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (line.size() != 26 || line[0] != '@' || line[9] != ' ')
      fail("malformed vmem line");
    auto hexval = [&](const std::string &s) {
      uint64_t v = 0;
      for (char c : s) {
        int d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else { fail("bad hex digit"); return uint64_t(0); }
        v = (v << 4) | uint64_t(d);
      }
      return v;
    };
    uint64_t addr = hexval(line.substr(1, 8)) << 3;
    uint64_t word = hexval(line.substr(10, 16));
    if (!first && addr <= prev_addr)
      fail(addr == prev_addr ? "duplicate address" : "misordered addresses");
    first = false;
    prev_addr = addr;
    out.word_map[addr] = word;
  }
  return out;
}

}  // namespace scfi::scramble

#endif  // SCFI_SCRAMBLE_HPP_
