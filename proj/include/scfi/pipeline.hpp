// Copyright scfi contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#ifndef SCFI_PIPELINE_HPP_
#define SCFI_PIPELINE_HPP_

#include <cstdint>
#include <string>

#include "scfi/assembler.hpp"
#include "scfi/cfg.hpp"
#include "scfi/instrument.hpp"
#include "scfi/metadata.hpp"
#include "scfi/prince.hpp"
#include "scfi/scramble.hpp"
#include "scfi/sim.hpp"

namespace scfi::pipeline {

struct Config {
  uint64_t seed = 1;
  prince::PrinceKey key{0x0011223344556677ull, 0x8899aabbccddeeffull};
  uint64_t base = 0x2000;
  uint64_t range_lo = 0x2000;
  uint64_t range_hi = 0x7fff8;
  prince::RoundConfig rounds = prince::RoundConfig::kReduced5;
};

struct Protected {
  asmparse::SourceProgram source;
  cfg::CallGraph graph;
  cfg::TweakAssignment tweaks;
  instrument::InstrumentedProgram prog;
  instrument::LayoutResult layout;
  scramble::FlashImage flash;
  prince::ScrambleParams params;
};

struct Plain {
  asmparse::SourceProgram source;
  instrument::InstrumentedProgram prog;
  instrument::LayoutResult layout;
  scramble::FlashImage flash;  // plaintext words, fetch path skips descramble
};

inline Protected build_protected(const std::string &text, const Config &cfg = {}) {
  Protected out;
  out.source = asmparse::assemble_or_throw(text);
  out.graph = cfg::build_call_graph(out.source);
  out.tweaks = cfg::assign_tweaks(out.graph, cfg.seed);
  out.prog = instrument::instrument(out.source, out.tweaks);
  out.layout = instrument::layout(out.prog, cfg.base, cfg.range_hi + 8);
  out.params = {cfg.key, cfg.range_lo, cfg.range_hi, cfg.rounds};
  out.flash = scramble::build_flash(out.layout.image, out.layout.metadata, out.params);
  return out;
}

inline Plain build_plain(const std::string &text, const Config &cfg = {}) {
  Plain out;
  out.source = asmparse::assemble_or_throw(text);
  out.prog = instrument::lower(out.source);
  out.layout = instrument::layout(out.prog, cfg.base, cfg.range_hi + 8);
  out.flash.word_map = out.layout.image;
  out.flash.params = {cfg.key, cfg.range_lo, cfg.range_hi, cfg.rounds};
  return out;
}

inline sim::Simulator make_sim(const Protected &p) {
  return sim::Simulator(p.flash, /*scrambled=*/true, p.layout.entry_addr,
                        p.layout.entry_tweak);
}

inline sim::Simulator make_sim(const Plain &p) {
  return sim::Simulator(p.flash, /*scrambled=*/false, p.layout.entry_addr, 0);
}

}  // namespace scfi::pipeline

#endif  // SCFI_PIPELINE_HPP_
