// Copyright scfi contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "scfi/bench.hpp"
#include "scfi/faults.hpp"
#include "scfi/pipeline.hpp"
#include "scfi/rng.hpp"

using namespace scfi;

namespace {

std::string read_program(const std::string &name) {
  std::ifstream f(std::string(SCFI_PROGRAMS_DIR "/") + name + ".s");
  if (!f.good()) throw std::runtime_error("missing program " + name);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const char *kSuite[] = {"branchy",  "callchain", "callgraph_demo",
                        "callheavy", "indirect",  "memops",
                        "mixed",     "recursion", "straightline"};

struct Check {
  std::string what;
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string &msg) {
    if (!cond && ok) {
      ok = false;
      detail = msg;
    }
  }
};

faults::CampaignTarget protected_target(const pipeline::Protected &p) {
  return {p.flash, true, p.layout.metadata, p.layout.entry_addr,
          p.layout.entry_tweak, p.tweaks.body_tweak};
}

faults::CampaignTarget plain_target(const pipeline::Plain &p) {
  return {p.flash, false, p.layout.metadata, p.layout.entry_addr, 0,
          faults::derive_body_tweaks(p.layout.metadata)};
}

// ---- criterion 1: cipher fidelity --------------------------------------

void cipher_fidelity(Check &c) {
  auto t0 = std::chrono::steady_clock::now();
  struct Vec {
    uint64_t pt, k0, k1, ct;
  };
  const Vec vecs[] = {
      {0x0000000000000000ull, 0, 0, 0x818665aa0d02dfdaull},
      {0xffffffffffffffffull, 0, 0, 0x604ae6ca03c20adaull},
      {0x0000000000000000ull, 0xffffffffffffffffull, 0, 0x9fb51935fc3df524ull},
      {0x0000000000000000ull, 0, 0xffffffffffffffffull, 0x78a54cbe737bb7efull},
      {0x0123456789abcdefull, 0, 0xfedcba9876543210ull, 0xae25ad3ca8fa9ccfull},
  };
  for (const auto &v : vecs) {
    prince::PrinceKey k{v.k0, v.k1};
    c.require(prince::encrypt(v.pt, k, prince::RoundConfig::kFull12) == v.ct,
              "reference vector mismatch");
    c.require(prince::decrypt(v.ct, k, prince::RoundConfig::kFull12) == v.pt,
              "reference vector decrypt mismatch");
  }
  SplitMix64 rng(2026);
  for (int i = 0; i < 10000; ++i) {
    prince::PrinceKey k{rng.next(), rng.next()};
    uint64_t b = rng.next();
    auto cfg = (i & 1) ? prince::RoundConfig::kFull12 : prince::RoundConfig::kReduced5;
    if (prince::decrypt(prince::encrypt(b, k, cfg), k, cfg) != b) {
      c.require(false, "round-trip identity failed");
      break;
    }
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.require(secs < 5.0, "runtime " + std::to_string(secs) + "s exceeds 5s");
  std::ostringstream os;
  os << "5 vectors, 10^4 round-trips, " << int(secs * 1000) << " ms";
  if (c.ok) c.detail = os.str();
}

// ---- criterion 2: transparency ------------------------------------------

void transparency(Check &c) {
  int n = 0;
  for (const char *name : kSuite) {
    std::string text = read_program(name);
    auto plain = pipeline::build_plain(text);
    auto prot = pipeline::build_protected(text);
    auto ps = pipeline::make_sim(plain);
    auto qs = pipeline::make_sim(prot);
    auto pr = ps.run(10'000'000);
    auto qr = qs.run(10'000'000);
    c.require(pr.termination == sim::Termination::kEcallExit,
              std::string(name) + ": plain run trapped");
    c.require(qr.termination == sim::Termination::kEcallExit,
              std::string(name) + ": protected run trapped");
    c.require(pr.exit_value == qr.exit_value,
              std::string(name) + ": exit value differs");
    c.require(ps.state().dmem == qs.state().dmem,
              std::string(name) + ": data memory differs");
    ++n;
  }
  c.require(n >= 8, "fewer than 8 bundled programs");
  if (c.ok) c.detail = std::to_string(n) + " programs, exit value + dmem equal";
}

// ---- criterion 3: wrong-tweak determinism --------------------------------

void wrong_tweak(Check &c) {
  auto p = pipeline::build_protected(read_program("callchain"));
  faults::CampaignConfig cfg;
  cfg.seed = 1;
  cfg.cells.push_back({faults::Surface::kAR, faults::DataTarget::kPc,
                       faults::CfmGoal::kCfm1, 1000});
  auto rep = faults::campaign(protected_target(p), cfg);
  const auto &cell = rep.cells[0];
  c.require(cell.trials == 1000, "campaign discarded trials (" +
                                     std::to_string(cell.discarded) + ")");
  c.require(cell.cross_function_redirects == cell.trials,
            "not every redirect crossed a function boundary");
  c.require(cell.wrong_tweak_landings == cell.trials,
            "tweak matched on " +
                std::to_string(cell.trials - cell.wrong_tweak_landings) +
                " landings");
  if (c.ok)
    c.detail = std::to_string(cell.wrong_tweak_landings) + "/" +
               std::to_string(cell.trials) + " mismatched landings";
}

// ---- criterion 4: detection prediction -----------------------------------

void detection_prediction(Check &c) {
  auto t0 = std::chrono::steady_clock::now();
  double density = isa::illegal_density(100000, 1);
  double predicted = faults::predicted_detection_rate(density, 4);

  auto p = pipeline::build_protected(read_program("callchain"));
  faults::CampaignConfig cfg;
  cfg.seed = 1;
  cfg.min_goal_instrs = 4;
  cfg.cells.push_back({faults::Surface::kAR, faults::DataTarget::kPc,
                       faults::CfmGoal::kCfm1, 1000});
  auto rep = faults::campaign(protected_target(p), cfg);
  const auto &cell = rep.cells[0];
  c.require(cell.trials >= 1000, "fewer than 1000 usable trials");
  double measured = cell.detection_rate();
  double diff = std::abs(measured - predicted);
  c.require(diff <= 0.05, "measured " + std::to_string(measured) +
                              " vs predicted " + std::to_string(predicted));
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.require(secs < 60.0, "runtime " + std::to_string(secs) + "s exceeds 60s");
  if (c.ok) {
    std::ostringstream os;
    os.precision(4);
    os << "measured " << measured << ", predicted " << predicted << ", "
       << int(secs * 1000) << " ms";
    c.detail = os.str();
  }
}

// ---- criterion 5: CFM3 scope fidelity -------------------------------------

double silent_rate(const faults::CellStats &cell) {
  return cell.trials ? double(cell.silent) / double(cell.trials) : 0.0;
}

double two_proportion_z(uint64_t x1, uint64_t n1, uint64_t x2, uint64_t n2) {
  if (!n1 || !n2) return 0.0;
  double p1 = double(x1) / double(n1), p2 = double(x2) / double(n2);
  double pool = double(x1 + x2) / double(n1 + n2);
  double var = pool * (1.0 - pool) * (1.0 / double(n1) + 1.0 / double(n2));
  if (var <= 0.0) return 0.0;
  return (p1 - p2) / std::sqrt(var);
}

void cfm3_scope(Check &c) {
  for (const char *name : {"branchy", "recursion"}) {
    std::string text = read_program(name);
    faults::CampaignConfig cfg;
    cfg.seed = 11;
    cfg.cells.push_back({faults::Surface::kAR, faults::DataTarget::kPc,
                         faults::CfmGoal::kCfm3, 1000});

    auto prot = pipeline::build_protected(text);
    auto rp = faults::campaign(protected_target(prot), cfg);
    auto plain = pipeline::build_plain(text);
    auto rn = faults::campaign(plain_target(plain), cfg);

    const auto &cp = rp.cells[0];
    const auto &cn = rn.cells[0];
    double z = two_proportion_z(cp.silent, cp.trials, cn.silent, cn.trials);
    std::ostringstream os;
    os.precision(3);
    os << name << ": protected " << silent_rate(cp) << " vs no-CFI "
       << silent_rate(cn) << " (z=" << z << ")";
    c.require(std::abs(z) < 2.576, os.str());
    if (c.ok) c.detail += (c.detail.empty() ? "" : "; ") + os.str();
  }
}

// ---- criterion 6: diffusion -----------------------------------------------

void diffusion(Check &c) {
  for (auto cfgr : {prince::RoundConfig::kFull12, prince::RoundConfig::kReduced5}) {
    SplitMix64 rng(55);
    uint64_t flipped = 0;
    const int samples = 1000;
    for (int i = 0; i < samples; ++i) {
      prince::PrinceKey k{rng.next(), rng.next()};
      uint64_t ct = rng.next();
      uint64_t bit = 1ull << rng.next_below(64);
      flipped += std::popcount(prince::decrypt(ct, k, cfgr) ^
                               prince::decrypt(ct ^ bit, k, cfgr));
    }
    double avg = double(flipped) / samples;
    const char *nm = cfgr == prince::RoundConfig::kFull12 ? "full" : "reduced5";
    c.require(avg >= 20.0, std::string(nm) + " config avg " + std::to_string(avg));
    if (c.ok)
      c.detail += (c.detail.empty() ? "" : ", ") + std::string(nm) + " avg " +
                  std::to_string(avg).substr(0, 5);
  }
}

// ---- criterion 7: overhead accounting ---------------------------------------

void overhead_accounting(Check &c) {
  bench::ProgramResult heavy, flat;
  for (const char *name : kSuite) {
    auto r = bench::measure(name, read_program(name));
    c.require(r.accounting_discrepancy() == 0,
              std::string(name) + ": discrepancy " +
                  std::to_string(r.accounting_discrepancy()) + " bytes");
    if (std::string(name) == "callheavy") heavy = r;
    if (std::string(name) == "straightline") flat = r;
  }
  c.require(heavy.cycle_overhead() > flat.cycle_overhead(),
            "callheavy overhead not above straightline");
  if (c.ok) {
    std::ostringstream os;
    os.precision(3);
    os << "0-byte discrepancy on " << std::size(kSuite)
       << " programs; callheavy " << 100 * heavy.cycle_overhead()
       << "% > straightline " << 100 * flat.cycle_overhead() << "%";
    c.detail = os.str();
  }
}

// ---- criterion 8: format round-trips ----------------------------------------

void format_roundtrips(Check &c) {
  SplitMix64 rng(808);
  for (int i = 0; i < 100; ++i) {
    meta::MetadataFile m;
    m.width = (rng.next() & 1) ? 5 : 20;
    uint64_t space = 1ull << m.width;
    m.entry_tweak = uint32_t(rng.next_below(space));
    uint64_t addr = 0x2000 + 8 * rng.next_below(64);
    size_t nfuncs = 1 + rng.next_below(6);
    for (size_t fi = 0; fi < nfuncs; ++fi) {
      meta::MetadataFile::Func f;
      f.name = "f" + std::to_string(fi);
      f.start = addr;
      size_t nblocks = 1 + rng.next_below(8);
      for (size_t b = 0; b < nblocks; ++b)
        f.blocks.emplace_back(8 * b, uint32_t(rng.next_below(space)));
      addr += 8 * (nblocks + rng.next_below(4));
      m.funcs.push_back(std::move(f));
    }
    m.entry_addr = m.funcs[0].start;
    if (!(meta::parse_metadata(meta::emit_metadata(m)) == m)) {
      c.require(false, "metadata round-trip failed at instance " + std::to_string(i));
      break;
    }
  }
  prince::ScrambleParams params{{1, 2}, 0x2000, 0x7fff8,
                                prince::RoundConfig::kReduced5};
  for (int i = 0; i < 100; ++i) {
    scramble::FlashImage f;
    f.params = params;
    size_t n = 1 + rng.next_below(200);
    uint64_t addr = 8 * rng.next_below(1024);
    for (size_t w = 0; w < n; ++w) {
      f.word_map[addr] = rng.next();
      addr += 8 * (1 + rng.next_below(4));
    }
    if (!(scramble::parse_vmem(scramble::emit_vmem(f), params) == f)) {
      c.require(false, "vmem round-trip failed at instance " + std::to_string(i));
      break;
    }
  }
  if (c.ok) c.detail = "100 metadata + 100 vmem instances bijective";
}

// ---- criterion 9: determinism -------------------------------------------------

void determinism(Check &c) {
  std::string text = read_program("mixed");
  auto a = pipeline::build_protected(text);
  auto b = pipeline::build_protected(text);
  c.require(scramble::emit_vmem(a.flash) == scramble::emit_vmem(b.flash),
            "vmem differs across runs");
  c.require(meta::emit_metadata(a.layout.metadata) ==
                meta::emit_metadata(b.layout.metadata),
            "metadata differs across runs");

  faults::CampaignConfig cfg;
  cfg.seed = 5;
  cfg.cells.push_back({faults::Surface::kAM, faults::DataTarget::kInstruction,
                       faults::CfmGoal::kNone, 200});
  cfg.cells.push_back({faults::Surface::kAR, faults::DataTarget::kPc,
                       faults::CfmGoal::kCfm1, 200});
  auto r1 = faults::to_json(faults::campaign(protected_target(a), cfg)).dump(2);
  auto r2 = faults::to_json(faults::campaign(protected_target(b), cfg)).dump(2);
  c.require(r1 == r2, "campaign report differs across runs");
  cfg.parallel = true;
  auto r3 = faults::to_json(faults::campaign(protected_target(a), cfg)).dump(2);
  c.require(r1 == r3, "serial and parallel campaign reports differ");
  if (c.ok) c.detail = "vmem, metadata and campaign JSON byte-identical";
}

}  // namespace

int main() {
  struct Criterion {
    const char *name;
    std::function<void(Check &)> fn;
  };
  const Criterion criteria[] = {
      {"cipher fidelity (reference vectors + round-trip, <5s)", cipher_fidelity},
      {"transparency (exit value + data memory, all programs)", transparency},
      {"wrong-tweak determinism (1000-trial CFM1, exactly 100%)", wrong_tweak},
      {"detection prediction (within 5pp of illegal-density model)", detection_prediction},
      {"CFM3 scope fidelity (silent rate indistinguishable from no-CFI)", cfm3_scope},
      {"diffusion (>=20/64 bits, both round configs)", diffusion},
      {"overhead accounting (0-byte discrepancy, callheavy > straightline)", overhead_accounting},
      {"format round-trips (100 metadata + 100 vmem instances)", format_roundtrips},
      {"determinism (byte-identical artifacts, serial == parallel)", determinism},
  };

  int failures = 0;
  int idx = 0;
  for (const auto &cr : criteria) {
    ++idx;
    Check c;
    c.what = cr.name;
    try {
      cr.fn(c);
    } catch (const std::exception &e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s: criterion %d: %s%s%s\n", c.ok ? "PASS" : "FAIL", idx,
                cr.name, c.detail.empty() ? "" : " -- ", c.detail.c_str());
    if (!c.ok) ++failures;
  }
  if (failures) std::printf("%d of 9 criteria failed\n", failures);
  return failures ? 1 : 0;
}
