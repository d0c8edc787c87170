// Copyright scfi contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "scfi/pipeline.hpp"
#include "scfi/rng.hpp"

using namespace scfi;

namespace {

std::string read_file(const std::string &path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

prince::ScrambleParams test_params() {
  return {{0x0011223344556677ull, 0x8899aabbccddeeffull}, 0x2000, 0x7fff8,
          prince::RoundConfig::kReduced5};
}

// Metadata with a single function covering [start, start + 8*n) one tweak
// per block.
meta::MetadataFile one_func(uint64_t start, std::vector<uint32_t> tweaks) {
  meta::MetadataFile m;
  m.entry_addr = start;
  m.entry_tweak = tweaks.front();
  meta::MetadataFile::Func f{"f", start, {}};
  for (size_t i = 0; i < tweaks.size(); ++i) f.blocks.emplace_back(8 * i, tweaks[i]);
  m.funcs.push_back(std::move(f));
  return m;
}

}  // namespace

TEST_CASE("vmem line format") {
  scramble::FlashImage f;
  f.word_map[0x2000] = 0xdeadbeefcafef00dull;
  CHECK(scramble::emit_vmem(f) == "@00000400 deadbeefcafef00d\n");
  scramble::FlashImage empty;
  CHECK(scramble::emit_vmem(empty).empty());
}

TEST_CASE("vmem parser rejects malformed input") {
  auto p = test_params();
  CHECK_THROWS_AS(scramble::parse_vmem("@400 deadbeefcafef00d\n", p),
                  scramble::VmemError);
  CHECK_THROWS_AS(scramble::parse_vmem("@00000400 deadbeefcafef00g\n", p),
                  scramble::VmemError);
  CHECK_THROWS_AS(
      scramble::parse_vmem("@00000400 0000000000000000\n"
                           "@00000400 0000000000000001\n", p),
      scramble::VmemError);
  CHECK_THROWS_AS(
      scramble::parse_vmem("@00000401 0000000000000000\n"
                           "@00000400 0000000000000001\n", p),
      scramble::VmemError);
}

TEST_CASE("vmem round-trips") {
  scramble::FlashImage f;
  f.params = test_params();
  SplitMix64 rng(3);
  for (int i = 0; i < 100; ++i) f.word_map[0x2000 + 8 * i] = rng.next();
  CHECK(scramble::parse_vmem(scramble::emit_vmem(f), f.params) == f);
}

TEST_CASE("decrypting with the block tweak recovers the plaintext") {
  auto p = test_params();
  instrument::MemoryImage img;
  img[0x2000] = 0x0123456789abcdefull;
  img[0x2008] = 0xfedcba9876543210ull;
  auto flash = scramble::build_flash(img, one_func(0x2000, {0x11, 0x07}), p);
  CHECK(prince::decrypt(flash.word_map.at(0x2000),
                        prince::effective_key(p.key, 0x11, 0x2000, p),
                        p.rounds) == img[0x2000]);
  CHECK(prince::decrypt(flash.word_map.at(0x2008),
                        prince::effective_key(p.key, 0x07, 0x2008, p),
                        p.rounds) == img[0x2008]);
}

TEST_CASE("decrypting with a wrong tweak essentially never recovers") {
  auto p = test_params();
  SplitMix64 rng(77);
  int recovered = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    uint64_t word = rng.next();
    uint32_t right = uint32_t(rng.next_below(32));
    uint32_t wrong = uint32_t(rng.next_below(32));
    if (right == wrong) continue;
    instrument::MemoryImage img;
    img[0x2000] = word;
    auto flash = scramble::build_flash(img, one_func(0x2000, {right}), p);
    uint64_t pt = prince::decrypt(flash.word_map.at(0x2000),
                                  prince::effective_key(p.key, wrong, 0x2000, p),
                                  p.rounds);
    if (pt == word) ++recovered;
  }
  CHECK(double(recovered) / n <= 0.001);
}

TEST_CASE("words outside the range use the base key unchanged") {
  auto p = test_params();
  instrument::MemoryImage img;
  img[0x1000] = 0x1111111111111111ull;  // below range_lo
  auto flash = scramble::build_flash(img, {}, p);
  CHECK(flash.word_map.at(0x1000) ==
        prince::encrypt(0x1111111111111111ull, p.key, p.rounds));
}

TEST_CASE("in-range word without a metadata block is an error") {
  auto p = test_params();
  instrument::MemoryImage img;
  img[0x2000] = 1;
  img[0x2010] = 2;  // gap at 0x2008 is fine; 0x2010 is uncovered
  CHECK_THROWS_AS(scramble::build_flash(img, one_func(0x2000, {1}), p),
                  scramble::ScrambleError);
}

TEST_CASE("overlapping metadata blocks are an error") {
  auto p = test_params();
  auto m = one_func(0x2000, {1, 2});
  meta::MetadataFile::Func g{"g", 0x2008, {{0, 3}}};  // overlaps f's block 1
  m.funcs.push_back(g);
  instrument::MemoryImage img;
  img[0x2000] = 1;
  CHECK_THROWS_AS(scramble::build_flash(img, m, p), scramble::ScrambleError);
}

TEST_CASE("changing one block's tweak only changes that block's ciphertext") {
  auto p = test_params();
  instrument::MemoryImage img;
  for (int i = 0; i < 4; ++i) img[0x2000 + 8 * i] = 0x5555555555555555ull;
  auto a = scramble::build_flash(img, one_func(0x2000, {1, 2, 3, 4}), p);
  auto b = scramble::build_flash(img, one_func(0x2000, {1, 9, 3, 4}), p);
  CHECK(a.word_map.at(0x2000) == b.word_map.at(0x2000));
  CHECK(a.word_map.at(0x2008) != b.word_map.at(0x2008));
  CHECK(a.word_map.at(0x2010) == b.word_map.at(0x2010));
  CHECK(a.word_map.at(0x2018) == b.word_map.at(0x2018));
}

TEST_CASE("flash image of the demo build matches the golden fixture") {
  auto p = pipeline::build_protected(
      read_file(std::string(SCFI_PROGRAMS_DIR "/callgraph_demo.s")));
  CHECK(scramble::emit_vmem(p.flash) ==
        read_file(SCFI_FIXTURES_DIR "/callgraph_demo_seed1.vmem"));
}
