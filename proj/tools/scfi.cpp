// Copyright scfi contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

// scfi: assemble, instrument, scramble, simulate and fault-test programs
// protected by tweak-scrambled flash. One subcommand per pipeline stage.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "scfi/bench.hpp"
#include "scfi/faults.hpp"
#include "scfi/pipeline.hpp"

namespace {

using namespace scfi;

std::string read_file(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string &path, const std::string &text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << text;
}

uint64_t parse_hex64(const std::string &s, const char *what) {
  std::string t = s;
  if (t.rfind("0x", 0) == 0 || t.rfind("0X", 0) == 0) t = t.substr(2);
  if (t.empty() || t.size() > 16)
    throw std::runtime_error(std::string(what) + ": bad hex value '" + s + "'");
  uint64_t v = 0;
  for (char c : t) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else throw std::runtime_error(std::string(what) + ": bad hex value '" + s + "'");
    v = (v << 4) | uint64_t(d);
  }
  return v;
}

prince::PrinceKey parse_key(const std::string &hex) {
  std::string t = hex;
  if (t.rfind("0x", 0) == 0) t = t.substr(2);
  if (t.size() != 32)
    throw std::runtime_error("key must be 32 hex chars (k0 || k1)");
  return {parse_hex64(t.substr(0, 16), "key"), parse_hex64(t.substr(16), "key")};
}

// "--range lo:hi", byte addresses, bounds clamped to granule alignment.
void parse_range(const std::string &s, prince::ScrambleParams &p) {
  auto colon = s.find(':');
  if (colon == std::string::npos)
    throw std::runtime_error("range must be '<lo>:<hi>'");
  p.range_lo = parse_hex64(s.substr(0, colon), "range_lo") & ~7ull;
  p.range_hi = parse_hex64(s.substr(colon + 1), "range_hi") & ~7ull;
}

prince::RoundConfig parse_rounds(const std::string &s) {
  if (s == "full") return prince::RoundConfig::kFull12;
  if (s == "reduced5") return prince::RoundConfig::kReduced5;
  throw std::runtime_error("rounds must be 'full' or 'reduced5'");
}

constexpr const char *kDefaultKey = "00112233445566778899aabbccddeeff";
constexpr const char *kDefaultRange = "0x2000:0x7fff8";

struct SimOpts {
  std::string key_hex = kDefaultKey;
  std::string range = kDefaultRange;
  std::string rounds = "reduced5";
  bool plain = false;

  prince::ScrambleParams params() const {
    prince::ScrambleParams p;
    p.key = parse_key(key_hex);
    parse_range(range, p);
    p.rounds = parse_rounds(rounds);
    p.validate();
    return p;
  }
};

void add_sim_opts(CLI::App *cmd, SimOpts &o) {
  cmd->add_option("--key", o.key_hex, "128-bit scramble key, 32 hex chars (k0||k1)");
  cmd->add_option("--range", o.range, "scramble address range '<lo>:<hi>'");
  cmd->add_option("--rounds", o.rounds, "cipher rounds: full | reduced5");
  cmd->add_flag("--plain", o.plain, "image is plaintext; skip descrambling");
}

int cmd_vectors() {
  struct Vec {
    uint64_t pt, k0, k1, ct;
  };
  // Published reference vectors for the 12-round cipher.
  const Vec vecs[] = {
      {0x0000000000000000ull, 0, 0, 0x818665aa0d02dfdaull},
      {0xffffffffffffffffull, 0, 0, 0x604ae6ca03c20adaull},
      {0x0000000000000000ull, 0xffffffffffffffffull, 0, 0x9fb51935fc3df524ull},
      {0x0000000000000000ull, 0, 0xffffffffffffffffull, 0x78a54cbe737bb7efull},
      {0x0123456789abcdefull, 0, 0xfedcba9876543210ull, 0xae25ad3ca8fa9ccfull},
  };
  bool ok = true;
  for (const auto &v : vecs) {
    prince::PrinceKey k{v.k0, v.k1};
    ok &= prince::encrypt(v.pt, k, prince::RoundConfig::kFull12) == v.ct;
    ok &= prince::decrypt(v.ct, k, prince::RoundConfig::kFull12) == v.pt;
  }
  SplitMix64 rng(0xdecaf);
  for (int i = 0; i < 1000 && ok; ++i) {
    prince::PrinceKey k{rng.next(), rng.next()};
    uint64_t b = rng.next();
    for (auto cfg : {prince::RoundConfig::kFull12, prince::RoundConfig::kReduced5})
      ok &= prince::decrypt(prince::encrypt(b, k, cfg), k, cfg) == b;
  }
  std::cout << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? 0 : 1;
}

int cmd_asm(const std::string &in) {
  auto res = asmparse::assemble(read_file(in));
  if (!res.ok()) {
    for (const auto &d : res.diagnostics)
      std::cerr << "error: asm: " << in << ":" << d.line << ": " << d.message << "\n";
    return 1;
  }
  const auto &p = *res.program;
  std::cout << "entry " << p.entry << "\n";
  for (const auto &fn : p.functions)
    std::cout << "func " << fn.name << " " << fn.instrs.size() << " instructions\n";
  return 0;
}

int cmd_graph(const std::string &in, uint64_t seed, const std::string &out) {
  auto p = asmparse::assemble_or_throw(read_file(in));
  auto g = cfg::build_call_graph(p);
  auto t = cfg::assign_tweaks(g, seed);
  std::string dot = cfg::to_dot(g, &t);
  if (out.empty()) std::cout << dot;
  else write_file(out, dot);
  return 0;
}

int cmd_instrument(const std::string &in, const std::string &out,
                   const std::string &meta_out, uint64_t seed, uint64_t base,
                   bool allow_collisions) {
  auto p = asmparse::assemble_or_throw(read_file(in));
  auto g = cfg::build_call_graph(p);
  auto t = cfg::assign_tweaks(g, seed, allow_collisions);
  auto ip = instrument::instrument(p, t);
  auto lr = instrument::layout(ip, base);
  scramble::FlashImage img;  // plaintext image reuses the vmem text format
  img.word_map = lr.image;
  write_file(out, scramble::emit_vmem(img));
  write_file(meta_out, meta::emit_metadata(lr.metadata));
  std::cout << "entry 0x" << std::hex << lr.entry_addr << " tweak 0x"
            << lr.entry_tweak << std::dec << " width " << int(t.width) << "\n";
  return 0;
}

int cmd_scramble(const std::string &in, const std::string &meta_in,
                 const std::string &out, const SimOpts &o) {
  auto params = o.params();
  auto img = scramble::parse_vmem(read_file(in), params);
  auto m = meta::parse_metadata(read_file(meta_in));
  instrument::MemoryImage mem(img.word_map.begin(), img.word_map.end());
  auto flash = scramble::build_flash(mem, m, params);
  write_file(out, scramble::emit_vmem(flash));
  return 0;
}

int cmd_run(const std::string &vmem, const std::string &meta_in,
            const SimOpts &o, std::string entry_hex, std::string tweak0_hex,
            uint64_t max_cycles, const std::string &trace_out) {
  auto params = o.params();
  auto flash = scramble::parse_vmem(read_file(vmem), params);
  auto m = meta::parse_metadata(read_file(meta_in));
  uint64_t entry = entry_hex.empty() ? m.entry_addr : parse_hex64(entry_hex, "entry");
  uint32_t tweak0 = tweak0_hex.empty() ? m.entry_tweak
                                       : uint32_t(parse_hex64(tweak0_hex, "tweak0"));
  sim::Simulator s(flash, !o.plain, entry, tweak0);
  auto r = s.run(max_cycles, !trace_out.empty());
  if (!trace_out.empty()) {
    std::ostringstream ss;
    for (const auto &e : r.trace) {
      nlohmann::json j{{"pc", e.pc}, {"tweak", e.tweak}, {"word", e.word},
                       {"mnemonic", e.mnemonic}};
      ss << j.dump() << "\n";
    }
    write_file(trace_out, ss.str());
  }
  std::cout << sim::to_string(r.termination) << " exit=" << r.exit_value
            << " cycles=" << r.cycles << "\n";
  return r.termination == sim::Termination::kEcallExit ? 0 : 2;
}

int cmd_fault(const std::string &vmem, const std::string &meta_in,
              const std::string &config_in, const std::string &out,
              const SimOpts &o, bool parallel) {
  auto params = o.params();
  faults::CampaignTarget t;
  t.flash = scramble::parse_vmem(read_file(vmem), params);
  t.flash.params = params;
  t.scrambled = !o.plain;
  t.metadata = meta::parse_metadata(read_file(meta_in));
  t.entry = t.metadata.entry_addr;
  t.initial_tweak = t.metadata.entry_tweak;
  t.body_tweak = faults::derive_body_tweaks(t.metadata);
  auto cfg = faults::parse_campaign_config(read_file(config_in));
  if (parallel) cfg.parallel = true;
  auto rep = faults::campaign(t, cfg);
  if (!out.empty()) write_file(out, faults::to_json(rep).dump(2) + "\n");
  std::cout << faults::to_table(rep);
  return 0;
}

int cmd_meta(const std::string &in) {
  auto m = meta::parse_metadata(read_file(in));
  std::cout << meta::emit_metadata(m);
  return 0;
}

int cmd_bench(const std::string &suite, const std::string &out, uint64_t seed,
              const SimOpts &o) {
  pipeline::Config cfg;
  cfg.seed = seed;
  auto params = o.params();
  cfg.key = params.key;
  cfg.range_lo = params.range_lo;
  cfg.range_hi = params.range_hi;
  cfg.rounds = params.rounds;
  cfg.base = params.range_lo;

  std::vector<std::string> files;
  for (const auto &e : std::filesystem::directory_iterator(suite))
    if (e.path().extension() == ".s") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .s files in '" + suite + "'");

  std::vector<bench::ProgramResult> results;
  for (const auto &f : files) {
    auto r = bench::measure(std::filesystem::path(f).stem().string(),
                            read_file(f), cfg);
    if (!r.outputs_match)
      throw std::runtime_error(r.name + ": protected exit value differs");
    if (r.accounting_discrepancy() != 0)
      throw std::runtime_error(r.name + ": size accounting discrepancy");
    results.push_back(std::move(r));
  }
  auto rep = bench::summarize(std::move(results));
  if (!out.empty()) write_file(out, bench::to_json(rep).dump(2) + "\n");
  for (const auto &r : rep.programs) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-16s size %+6.2f%%  cycles %+6.2f%%\n",
                  r.name.c_str(), 100.0 * r.size_overhead(),
                  100.0 * r.cycle_overhead());
    std::cout << buf;
  }
  std::cout << "geomean size ratio " << rep.geomean_size_ratio
            << "  cycle ratio " << rep.geomean_cycle_ratio << "\n";
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"scrambled-flash control-flow integrity pipeline"};
  app.require_subcommand(1);

  auto *vectors = app.add_subcommand("vectors", "cipher self-test against reference vectors");

  std::string asm_in;
  auto *asmc = app.add_subcommand("asm", "parse a source file and print a summary");
  asmc->add_option("input", asm_in, "source file (.s)")->required();

  std::string graph_in, graph_out;
  uint64_t graph_seed = 1;
  auto *graph = app.add_subcommand("graph", "dump the call graph with tweaks as DOT");
  graph->add_option("input", graph_in)->required();
  graph->add_option("--seed", graph_seed, "tweak assignment seed");
  graph->add_option("-o,--output", graph_out, "output file (default stdout)");

  std::string inst_in, inst_out, inst_meta;
  uint64_t inst_seed = 1;
  std::string inst_base = "0x2000";
  bool inst_collide = false;
  auto *inst = app.add_subcommand("instrument", "instrument and lay out a program");
  inst->add_option("input", inst_in)->required();
  inst->add_option("-o,--output", inst_out, "plaintext image (vmem text)")->required();
  inst->add_option("--meta", inst_meta, "metadata sidecar output")->required();
  inst->add_option("--seed", inst_seed, "tweak assignment seed");
  inst->add_option("--base", inst_base, "layout base address (hex)");
  inst->add_flag("--allow-collisions", inst_collide, "permit tweak collisions past 2^20");

  std::string scr_in, scr_meta, scr_out;
  SimOpts scr_opts;
  auto *scr = app.add_subcommand("scramble", "encrypt a laid-out image into flash vmem");
  scr->add_option("input", scr_in, "plaintext image (vmem text)")->required();
  scr->add_option("--meta", scr_meta)->required();
  scr->add_option("-o,--output", scr_out)->required();
  add_sim_opts(scr, scr_opts);

  std::string run_in, run_meta, run_entry, run_tweak0, run_trace;
  uint64_t run_max = 1000000;
  SimOpts run_opts;
  auto *runc = app.add_subcommand("run", "simulate a flash image");
  runc->add_option("input", run_in, "flash vmem")->required();
  runc->add_option("--meta", run_meta)->required();
  runc->add_option("--entry", run_entry, "entry address (hex, default from metadata)");
  runc->add_option("--tweak0", run_tweak0, "initial tweak (hex, default from metadata)");
  runc->add_option("--max-cycles", run_max);
  runc->add_option("--trace", run_trace, "JSONL trace output");
  add_sim_opts(runc, run_opts);

  std::string fault_in, fault_meta, fault_cfg, fault_out;
  bool fault_parallel = false;
  SimOpts fault_opts;
  auto *fault = app.add_subcommand("fault", "run a fault-injection campaign");
  fault->add_option("input", fault_in, "flash vmem")->required();
  fault->add_option("--meta", fault_meta)->required();
  fault->add_option("--config", fault_cfg, "campaign config file")->required();
  fault->add_option("-o,--output", fault_out, "JSON report output");
  fault->add_flag("--parallel", fault_parallel, "run trials on multiple threads");
  add_sim_opts(fault, fault_opts);

  std::string meta_in;
  auto *metac = app.add_subcommand("meta", "parse and re-emit a metadata file");
  metac->add_option("input", meta_in)->required();

  std::string bench_suite, bench_out;
  uint64_t bench_seed = 1;
  SimOpts bench_opts;
  auto *benchc = app.add_subcommand("bench", "measure size and cycle overhead");
  benchc->add_option("--suite", bench_suite, "directory of .s programs")->required();
  benchc->add_option("-o,--output", bench_out, "JSON report output");
  benchc->add_option("--seed", bench_seed);
  add_sim_opts(benchc, bench_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (vectors->parsed()) return cmd_vectors();
    if (asmc->parsed()) return cmd_asm(asm_in);
    if (graph->parsed()) return cmd_graph(graph_in, graph_seed, graph_out);
    if (inst->parsed())
      return cmd_instrument(inst_in, inst_out, inst_meta, inst_seed,
                            parse_hex64(inst_base, "base"), inst_collide);
    if (scr->parsed()) return cmd_scramble(scr_in, scr_meta, scr_out, scr_opts);
    if (runc->parsed())
      return cmd_run(run_in, run_meta, run_opts, run_entry, run_tweak0, run_max,
                     run_trace);
    if (fault->parsed())
      return cmd_fault(fault_in, fault_meta, fault_cfg, fault_out, fault_opts,
                       fault_parallel);
    if (metac->parsed()) return cmd_meta(meta_in);
    if (benchc->parsed())
      return cmd_bench(bench_suite, bench_out, bench_seed, bench_opts);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
