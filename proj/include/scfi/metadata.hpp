// Copyright scfi contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#ifndef SCFI_METADATA_HPP_
#define SCFI_METADATA_HPP_

#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace scfi::meta {

// Sidecar file standing in for the ELF metadata section: per-function start
// addresses and per-64-bit-block decryption tweaks. Format (lowercase hex,
// single spaces, LF):
//
//   META <width> <entry-addr> <entry-tweak>
//   FUNC <name> <start-addr> <n-blocks>
//   BLOCK <offset> <tweak>
struct MetadataFile {
  struct Func {
    std::string name;
    uint64_t start = 0;
    std::vector<std::pair<uint64_t, uint32_t>> blocks;  // (offset, tweak)

    friend bool operator==(const Func &, const Func &) = default;
  };

  uint8_t width = 5;
  uint64_t entry_addr = 0;
  uint32_t entry_tweak = 0;
  std::vector<Func> funcs;

  friend bool operator==(const MetadataFile &, const MetadataFile &) = default;

  // Tweak of the 64-bit block containing addr, if any block covers it.
  std::optional<uint32_t> tweak_at(uint64_t addr) const {
    uint64_t granule = addr & ~7ull;
    for (const auto &f : funcs) {
      if (granule < f.start) continue;
      uint64_t off = granule - f.start;
      for (const auto &[bo, tw] : f.blocks)
        if (bo == off) return tw;
    }
    return std::nullopt;
  }

  const Func *function_of(uint64_t addr) const {
    for (const auto &f : funcs) {
      if (f.blocks.empty()) continue;
      uint64_t end = f.start + f.blocks.back().first + 8;
      if (addr >= f.start && addr < end) return &f;
    }
    return nullptr;
  }
};

class MetadataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string hex(uint64_t v, int pad = 0) {
  std::ostringstream os;
  os << std::hex << v;
  std::string s = os.str();
  while (int(s.size()) < pad) s.insert(s.begin(), '0');
  return s;
}

inline uint64_t parse_hex(const std::string &tok, int line) {
  if (tok.empty()) throw MetadataError("line " + std::to_string(line) + ": empty hex field");
  uint64_t v = 0;
  for (char c : tok) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else throw MetadataError("line " + std::to_string(line) + ": bad hex '" + tok + "'");
    if (v >> 60) throw MetadataError("line " + std::to_string(line) + ": hex overflow");
    v = (v << 4) | uint64_t(d);
  }
  return v;
}

}  // namespace detail

inline std::string emit_metadata(const MetadataFile &m) {
  using detail::hex;
  if (m.funcs.empty() && m.entry_addr == 0 && m.entry_tweak == 0) return "";
  std::ostringstream os;
  os << "META " << int(m.width) << " " << hex(m.entry_addr, 8) << " "
     << hex(m.entry_tweak) << "\n";
  for (const auto &f : m.funcs) {
    os << "FUNC " << f.name << " " << hex(f.start, 8) << " " << f.blocks.size()
       << "\n";
    for (const auto &[off, tw] : f.blocks)
      os << "BLOCK " << hex(off) << " " << hex(tw) << "\n";
  }
  return os.str();
}

inline MetadataFile parse_metadata(const std::string &text) {
  using detail::parse_hex;
  MetadataFile m;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  bool have_meta = false;
  MetadataFile::Func *cur = nullptr;
  size_t expect_blocks = 0;
  auto fail = [&](const std::string &msg) {
    throw MetadataError("line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) fail("empty line");
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "META") {
      if (have_meta) fail("duplicate META record");
      int w;
      std::string addr, tweak, extra;
      if (!(ls >> w >> addr >> tweak) || (ls >> extra)) fail("malformed META record");
      if (w != 5 && w != 20) fail("tweak width must be 5 or 20");
      m.width = uint8_t(w);
      m.entry_addr = parse_hex(addr, lineno);
      m.entry_tweak = uint32_t(parse_hex(tweak, lineno));
      have_meta = true;
    } else if (kw == "FUNC") {
      if (!have_meta) fail("FUNC before META");
      if (cur && cur->blocks.size() != expect_blocks) fail("block count mismatch");
      std::string name, addr, extra;
      size_t n;
      if (!(ls >> name >> addr >> n) || (ls >> extra)) fail("malformed FUNC record");
      for (const auto &f : m.funcs)
        if (f.name == name) fail("duplicate FUNC '" + name + "'");
      m.funcs.push_back({name, parse_hex(addr, lineno), {}});
      cur = &m.funcs.back();
      expect_blocks = n;
    } else if (kw == "BLOCK") {
      if (!cur) fail("BLOCK outside FUNC");
      std::string off, tw, extra;
      if (!(ls >> off >> tw) || (ls >> extra)) fail("malformed BLOCK record");
      uint64_t o = parse_hex(off, lineno);
      uint64_t t = parse_hex(tw, lineno);
      if (o & 7) fail("block offset not 8-byte aligned");
      if (!cur->blocks.empty() && o <= cur->blocks.back().first)
        fail("non-monotone block offset");
      if (t >= (1ull << m.width)) fail("tweak exceeds width");
      if (cur->blocks.size() >= expect_blocks) fail("more BLOCK records than declared");
      cur->blocks.emplace_back(o, uint32_t(t));
    } else {
      fail("unknown record '" + kw + "'");
    }
  }
  if (!have_meta && !m.funcs.empty()) throw MetadataError("missing META record");
  if (cur && cur->blocks.size() != expect_blocks)
    throw MetadataError("block count mismatch in last FUNC");
  if (!have_meta) {
    // Empty program: empty file parses to empty metadata.
    return m;
  }
  return m;
}

}  // namespace scfi::meta

#endif  // SCFI_METADATA_HPP_
