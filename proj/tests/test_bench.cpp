// Copyright scfi contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "scfi/bench.hpp"

using namespace scfi;

namespace {

const char *kSuite[] = {"branchy",  "callchain", "callgraph_demo",
                        "callheavy", "indirect",  "memops",
                        "mixed",     "recursion", "straightline"};

std::string read_program(const std::string &name) {
  std::ifstream f(std::string(SCFI_PROGRAMS_DIR "/") + name + ".s");
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("geomean") {
  CHECK(bench::geomean({1.0, 4.0}) == Catch::Approx(2.0));
  CHECK(bench::geomean({}) == 1.0);
  CHECK(bench::geomean({3.0}) == Catch::Approx(3.0));
  CHECK_THROWS_AS(bench::geomean({1.0, 0.0}), bench::BenchError);
}

TEST_CASE("call-free code pays no overhead") {
  auto r = bench::measure("straightline", read_program("straightline"));
  CHECK(r.outputs_match);
  CHECK(r.cycle_overhead() == Catch::Approx(0.0));
  CHECK(r.size_overhead() == Catch::Approx(0.0));
  CHECK(r.accounting_discrepancy() == 0);
}

TEST_CASE("call-dense code pays more than call-free code") {
  auto heavy = bench::measure("callheavy", read_program("callheavy"));
  auto flat = bench::measure("straightline", read_program("straightline"));
  CHECK(heavy.cycle_overhead() > flat.cycle_overhead());
  CHECK(heavy.size_overhead() > flat.size_overhead());
}

TEST_CASE("accounting explains every added byte across the suite") {
  std::vector<bench::ProgramResult> results;
  for (const char *name : kSuite) {
    auto r = bench::measure(name, read_program(name));
    INFO(name);
    CHECK(r.outputs_match);
    CHECK(r.accounting_discrepancy() == 0);
    results.push_back(std::move(r));
  }
  auto rep = bench::summarize(std::move(results));
  CHECK(rep.geomean_cycle_ratio >= 1.0);
  CHECK(rep.geomean_size_ratio >= 1.0);

  auto j = bench::to_json(rep);
  CHECK(j["programs"].size() == std::size(kSuite));
  for (const auto &p : j["programs"]) {
    CHECK(p["outputs_match"].get<bool>());
    CHECK(p["accounting"]["discrepancy_bytes"].get<int64_t>() == 0);
  }
}

TEST_CASE("a trapping baseline is reported as an error") {
  CHECK_THROWS_AS(
      bench::measure("bad", "func main:\n  lw a0, 0(zero)\n  ecall\n"),
      bench::BenchError);
}
