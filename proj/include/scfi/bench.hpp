// Copyright scfi contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#ifndef SCFI_BENCH_HPP_
#define SCFI_BENCH_HPP_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scfi/pipeline.hpp"

namespace scfi::bench {

class BenchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProgramResult {
  std::string name;
  uint64_t plain_cycles = 0;
  uint64_t protected_cycles = 0;
  size_t plain_bytes = 0;
  size_t protected_bytes = 0;
  instrument::Accounting accounting;        // protected build
  instrument::Accounting plain_accounting;  // trailing pads only
  uint32_t exit_value = 0;
  bool outputs_match = false;

  double cycle_ratio() const {
    return plain_cycles ? double(protected_cycles) / double(plain_cycles) : 1.0;
  }
  double cycle_overhead() const { return cycle_ratio() - 1.0; }
  double size_overhead() const {
    return plain_bytes ? double(protected_bytes) / double(plain_bytes) - 1.0 : 0.0;
  }
  // Bytes of growth the per-category accounting fails to explain. The plain
  // build also pads functions to whole granules, so its pads are netted out.
  // Must be 0.
  int64_t accounting_discrepancy() const {
    return int64_t(protected_bytes) - int64_t(plain_bytes) -
           (int64_t(accounting.total_bytes()) -
            int64_t(plain_accounting.total_bytes()));
  }
};

struct Report {
  std::vector<ProgramResult> programs;
  double geomean_cycle_ratio = 1.0;
  double geomean_size_ratio = 1.0;
};

inline double geomean(const std::vector<double> &xs) {
  if (xs.empty()) return 1.0;
  double acc = 0.0;
  for (double x : xs) {
    if (x <= 0.0) throw BenchError("geomean requires positive values");
    acc += std::log(x);
  }
  return std::exp(acc / double(xs.size()));
}

inline ProgramResult measure(const std::string &name, const std::string &text,
                             const pipeline::Config &cfg = {},
                             uint64_t max_cycles = 10'000'000) {
  ProgramResult r;
  r.name = name;

  pipeline::Plain plain = pipeline::build_plain(text, cfg);
  pipeline::Protected prot = pipeline::build_protected(text, cfg);
  r.plain_bytes = 8 * plain.layout.image.size();
  r.protected_bytes = 8 * prot.layout.image.size();
  r.accounting = prot.prog.accounting;
  r.plain_accounting = plain.prog.accounting;

  auto pr = pipeline::make_sim(plain).run(max_cycles);
  auto qr = pipeline::make_sim(prot).run(max_cycles);
  if (pr.termination != sim::Termination::kEcallExit)
    throw BenchError(name + ": baseline did not exit cleanly (" +
                     std::string(sim::to_string(pr.termination)) + ")");
  if (qr.termination != sim::Termination::kEcallExit)
    throw BenchError(name + ": protected build did not exit cleanly (" +
                     std::string(sim::to_string(qr.termination)) + ")");
  r.plain_cycles = pr.cycles;
  r.protected_cycles = qr.cycles;
  r.exit_value = qr.exit_value;
  r.outputs_match = pr.exit_value == qr.exit_value;
  return r;
}

inline Report summarize(std::vector<ProgramResult> results) {
  Report rep;
  std::vector<double> cr, sr;
  for (const auto &r : results) {
    cr.push_back(r.cycle_ratio());
    sr.push_back(double(r.protected_bytes) / double(r.plain_bytes));
  }
  rep.geomean_cycle_ratio = geomean(cr);
  rep.geomean_size_ratio = geomean(sr);
  rep.programs = std::move(results);
  return rep;
}

inline nlohmann::json to_json(const Report &rep) {
  nlohmann::json j;
  j["programs"] = nlohmann::json::array();
  for (const auto &r : rep.programs) {
    nlohmann::json p;
    p["name"] = r.name;
    p["plain_cycles"] = r.plain_cycles;
    p["protected_cycles"] = r.protected_cycles;
    p["cycle_overhead"] = r.cycle_overhead();
    p["plain_bytes"] = r.plain_bytes;
    p["protected_bytes"] = r.protected_bytes;
    p["size_overhead"] = r.size_overhead();
    p["exit_value"] = r.exit_value;
    p["outputs_match"] = r.outputs_match;
    p["accounting"] = {
        {"switch_instrs", r.accounting.switch_instrs},
        {"align_nops", r.accounting.align_nops},
        {"thunk_instrs", r.accounting.thunk_instrs},
        {"epilogue_instrs", r.accounting.epilogue_instrs},
        {"flag_save_instrs", r.accounting.flag_save_instrs},
        {"pad_instrs", r.accounting.pad_instrs},
        {"total_bytes", r.accounting.total_bytes()},
        {"discrepancy_bytes", r.accounting_discrepancy()},
    };
    j["programs"].push_back(std::move(p));
  }
  j["geomean_cycle_ratio"] = rep.geomean_cycle_ratio;
  j["geomean_size_ratio"] = rep.geomean_size_ratio;
  return j;
}

}  // namespace scfi::bench

#endif  // SCFI_BENCH_HPP_
