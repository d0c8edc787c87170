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

std::string read_program(const char *name) {
  std::ifstream f(std::string(SCFI_PROGRAMS_DIR "/") + name);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

uint64_t pack(isa::Instruction lo, isa::Instruction hi) {
  return uint64_t(isa::encode(lo).value) | (uint64_t(isa::encode(hi).value) << 32);
}

prince::ScrambleParams test_params() {
  return {{0x0011223344556677ull, 0x8899aabbccddeeffull}, 0x2000, 0x7fff8,
          prince::RoundConfig::kReduced5};
}

}  // namespace

TEST_CASE("writing the tweak CSR flushes the icache") {
  scramble::FlashImage flash;
  flash.params = test_params();
  flash.word_map[0x2000] =
      pack(isa::nop(), {isa::Op::kCsrrwi, 0, 0, 0, 5, isa::kCsrTweak});
  flash.word_map[0x2008] = pack({isa::Op::kEcall, 0, 0, 0, 0, 0}, isa::nop());
  sim::Simulator s(flash, /*scrambled=*/false, 0x2000, 0);

  REQUIRE(s.step() == sim::StepEvent::kRetired);  // nop caches the granule
  CHECK(s.state().icache.size() == 1);
  REQUIRE(s.step() == sim::StepEvent::kRetired);  // csrrwi flushes it
  CHECK(s.state().icache.empty());
  CHECK(s.state().csr_tweak == 5);
}

TEST_CASE("straight-line code runs at one instruction per cycle") {
  std::string text = "func main:\n";
  for (int i = 0; i < 9; ++i) text += "  addi a0, a0, 1\n";
  text += "  ecall\n";
  auto p = pipeline::build_plain(text);
  auto r = pipeline::make_sim(p).run(1000);
  CHECK(r.termination == sim::Termination::kEcallExit);
  CHECK(r.cycles == 10);
  CHECK(r.exit_value == 9);
}

TEST_CASE("cycle limit terminates the run") {
  auto p = pipeline::build_plain("func main:\n  addi a0, a0, 1\n  ecall\n");
  auto s = pipeline::make_sim(p);
  auto r = s.run(1);
  CHECK(r.termination == sim::Termination::kCycleLimit);
  CHECK(r.cycles == 1);
  CHECK_THROWS_AS(s.run(0), sim::SimError);
}

TEST_CASE("a wrong boot tweak traps almost immediately") {
  std::string text = read_program("mixed.s");
  SplitMix64 rng(321);
  int abnormal = 0, illegal = 0;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    pipeline::Config cfg;
    cfg.key = {rng.next(), rng.next()};
    auto p = pipeline::build_protected(text, cfg);
    uint32_t wrong = p.layout.entry_tweak ^ uint32_t(1 + rng.next_below(31));
    sim::Simulator s(p.flash, true, p.layout.entry_addr, wrong);
    auto r = s.run(1000);
    if (r.termination != sim::Termination::kEcallExit) ++abnormal;
    if (r.termination == sim::Termination::kIllegalTrap) ++illegal;
  }
  CHECK(abnormal >= 99);
  CHECK(illegal >= 90);
}

TEST_CASE("the range CSRs gate tweak injection") {
  auto params = test_params();
  uint64_t word = pack({isa::Op::kAddi, 10, 0, 0, 3, 0}, isa::nop());
  uint64_t word2 = pack({isa::Op::kEcall, 0, 0, 0, 0, 0}, isa::nop());

  SECTION("outside the range the tweak CSR is ignored") {
    scramble::FlashImage flash;
    flash.params = params;
    flash.word_map[0x1000] = prince::encrypt(word, params.key, params.rounds);
    flash.word_map[0x1008] = prince::encrypt(word2, params.key, params.rounds);
    sim::Simulator s(flash, true, 0x1000, /*initial_tweak=*/7);
    auto r = s.run(100);
    CHECK(r.termination == sim::Termination::kEcallExit);
    CHECK(r.exit_value == 3);
  }

  SECTION("moving the range away from the code garbles the fetch") {
    scramble::FlashImage flash;
    flash.params = params;
    auto key = prince::effective_key(params.key, 7, 0x2000, params);
    flash.word_map[0x2000] = prince::encrypt(word, key, params.rounds);
    key = prince::effective_key(params.key, 7, 0x2008, params);
    flash.word_map[0x2008] = prince::encrypt(word2, key, params.rounds);

    sim::Simulator good(flash, true, 0x2000, 7);
    auto r = good.run(100);
    CHECK(r.termination == sim::Termination::kEcallExit);
    CHECK(r.exit_value == 3);

    sim::Simulator bad(flash, true, 0x2000, 7);
    bad.state().csr_range_lo = 0x3000;  // code now sits outside the range
    r = bad.run(100);
    CHECK(r.termination != sim::Termination::kEcallExit);
  }
}

TEST_CASE("scrambled execution is trace-equivalent to its plaintext image") {
  auto p = pipeline::build_protected(read_program("branchy.s"));
  auto rs = pipeline::make_sim(p).run(100000, true);

  scramble::FlashImage plain;
  plain.word_map = p.layout.image;
  plain.params = p.params;
  sim::Simulator s(plain, /*scrambled=*/false, p.layout.entry_addr,
                   p.layout.entry_tweak);
  auto rp = s.run(100000, true);

  CHECK(rs.termination == rp.termination);
  CHECK(rs.exit_value == rp.exit_value);
  CHECK(rs.cycles == rp.cycles);
  REQUIRE(rs.trace.size() == rp.trace.size());
  for (size_t i = 0; i < rs.trace.size(); ++i) {
    CHECK(rs.trace[i].pc == rp.trace[i].pc);
    CHECK(rs.trace[i].word == rp.trace[i].word);
  }
}

TEST_CASE("x0 stays zero") {
  auto p = pipeline::build_plain(
      "func main:\n"
      "  addi x0, x0, 5\n"
      "  add a0, x0, x0\n"
      "  ecall\n");
  auto r = pipeline::make_sim(p).run(100);
  CHECK(r.termination == sim::Termination::kEcallExit);
  CHECK(r.exit_value == 0);
}

TEST_CASE("entry validation") {
  auto p = pipeline::build_plain("func main:\n  ecall\n");
  CHECK_THROWS_AS(sim::Simulator(p.flash, false, 0x2002, 0), sim::SimError);
  CHECK_THROWS_AS(sim::Simulator(p.flash, false, 0x9000, 0), sim::SimError);
}

TEST_CASE("mcycle counts retired instructions and ignores writes") {
  auto p = pipeline::build_plain(
      "func main:\n"
      "  addi t0, zero, 9\n"
      "  csrr a0, mcycle\n"
      "  csrrw zero, mcycle, t0\n"
      "  csrr a1, mcycle\n"
      "  ecall\n");
  auto s = pipeline::make_sim(p);
  auto r = s.run(100);
  CHECK(r.termination == sim::Termination::kEcallExit);
  CHECK(r.exit_value == 1);          // mcycle after the first instruction
  CHECK(s.state().gpr[11] == 3);     // the write to mcycle had no effect
  CHECK(r.cycles == 5);
}

TEST_CASE("loads and stores fault outside data RAM") {
  auto p = pipeline::build_plain(
      "func main:\n"
      "  li t0, 0x1000\n"
      "  lw a0, 0(t0)\n"
      "  ecall\n");
  CHECK(pipeline::make_sim(p).run(100).termination == sim::Termination::kMemFault);

  auto q = pipeline::build_plain(
      "func main:\n"
      "  li t0, 0x80000000\n"
      "  addi t0, t0, -4\n"
      "  sw t0, 0(t0)\n"
      "  ecall\n");
  CHECK(pipeline::make_sim(q).run(100).termination == sim::Termination::kMemFault);
}
