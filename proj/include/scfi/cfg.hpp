// Copyright scfi contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#ifndef SCFI_CFG_HPP_
#define SCFI_CFG_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scfi/assembler.hpp"
#include "scfi/rng.hpp"

namespace scfi::cfg {

struct DirectEdge {
  std::string caller;
  std::string callee;
  size_t site;  // instruction index in the caller
};

struct IndirectEdge {
  std::string caller;
  size_t site;
  std::vector<std::string> targets;
};

struct CallGraph {
  std::vector<std::string> nodes;  // program order
  std::vector<DirectEdge> direct_edges;
  std::vector<IndirectEdge> indirect_edges;
};

struct Tweak {
  uint32_t value = 0;
  uint8_t width = 5;  // 5 or 20 bits
};

struct TweakAssignment {
  uint8_t width = 5;
  std::map<std::string, uint32_t> body_tweak;       // function -> tweak
  std::map<int, uint32_t> entry_tweak;              // class id -> tweak
  std::map<std::string, int> class_of;              // class members only
  uint64_t seed = 0;

  std::optional<int> class_id(const std::string &fn) const {
    auto it = class_of.find(fn);
    if (it == class_of.end()) return std::nullopt;
    return it->second;
  }
};

class TweakSpaceExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One direct edge per jal-to-function site, one indirect edge per annotated
// jalr site. Intra-function branches are not edges.
inline CallGraph build_call_graph(const asmparse::SourceProgram &p) {
  CallGraph g;
  for (const auto &fn : p.functions) g.nodes.push_back(fn.name);
  for (const auto &fn : p.functions) {
    for (size_t i = 0; i < fn.instrs.size(); ++i) {
      const auto &si = fn.instrs[i];
      if (si.ref == asmparse::RefKind::kFunc && si.ins.op == isa::Op::kJal) {
        g.direct_edges.push_back({fn.name, si.sym, i});
      } else if (si.ins.op == isa::Op::kJalr && !si.is_return) {
        if (si.targets.empty())
          throw std::logic_error("indirect call without target set");
        g.indirect_edges.push_back({fn.name, i, si.targets});
      }
    }
  }
  return g;
}

namespace detail {

class UnionFind {
 public:
  void add(const std::string &x) {
    parent_.emplace(x, x);
  }
  std::string find(const std::string &x) {
    auto &p = parent_.at(x);
    if (p == x) return x;
    p = find(p);
    return p;
  }
  void unite(const std::string &a, const std::string &b) {
    auto ra = find(a), rb = find(b);
    if (ra != rb) parent_.at(rb) = ra;
  }

 private:
  std::map<std::string, std::string> parent_;
};

}  // namespace detail

// Assigns pairwise-distinct body tweaks to every function and a shared entry
// tweak to each indirect-target class (overlapping target sets merged by
// union-find). Entry tweaks are disjoint from all body tweaks. Width is 5
// bits when all distinct tweaks fit into 32 values, 20 bits otherwise.
inline TweakAssignment assign_tweaks(const CallGraph &g, uint64_t seed,
                                     bool allow_collisions = false) {
  TweakAssignment out;
  out.seed = seed;

  detail::UnionFind uf;
  std::set<std::string> in_class;
  for (const auto &e : g.indirect_edges) {
    for (const auto &t : e.targets) {
      if (in_class.insert(t).second) uf.add(t);
    }
  }
  for (const auto &e : g.indirect_edges) {
    for (size_t i = 1; i < e.targets.size(); ++i)
      uf.unite(e.targets[0], e.targets[i]);
  }

  // Deterministic class ids: order classes by first member in node order.
  std::map<std::string, int> rep_to_id;
  for (const auto &fn : g.nodes) {
    if (!in_class.count(fn)) continue;
    auto rep = uf.find(fn);
    auto [it, fresh] = rep_to_id.emplace(rep, int(rep_to_id.size()));
    out.class_of[fn] = it->second;
  }
  size_t num_classes = rep_to_id.size();

  size_t needed = g.nodes.size() + num_classes;
  out.width = needed <= 32 ? 5 : 20;
  uint64_t space = 1ull << out.width;
  if (needed > space) {
    if (out.width == 20 && !allow_collisions)
      throw TweakSpaceExhausted(
          "program needs " + std::to_string(needed) +
          " distinct tweaks, exceeding the 20-bit tweak space");
  }

  SplitMix64 rng(seed);
  std::set<uint32_t> used;
  auto draw = [&]() -> uint32_t {
    for (;;) {
      uint32_t t = uint32_t(rng.next_below(space));
      if (allow_collisions && used.size() >= space) return t;
      if (used.insert(t).second) return t;
    }
  };

  for (const auto &fn : g.nodes) out.body_tweak[fn] = draw();
  for (size_t c = 0; c < num_classes; ++c) out.entry_tweak[int(c)] = draw();
  return out;
}

// GraphViz dump of the call graph with assigned tweaks.
inline std::string to_dot(const CallGraph &g, const TweakAssignment *tw = nullptr) {
  std::ostringstream os;
  os << "digraph callgraph {\n";
  for (const auto &n : g.nodes) {
    os << "  \"" << n << "\"";
    if (tw) {
      os << " [label=\"" << n << "\\nT=0x" << std::hex
         << tw->body_tweak.at(n) << std::dec;
      if (auto c = tw->class_id(n))
        os << " TE=0x" << std::hex << tw->entry_tweak.at(*c) << std::dec;
      os << "\"]";
    }
    os << ";\n";
  }
  for (const auto &e : g.direct_edges)
    os << "  \"" << e.caller << "\" -> \"" << e.callee << "\";\n";
  for (const auto &e : g.indirect_edges) {
    for (const auto &t : e.targets)
      os << "  \"" << e.caller << "\" -> \"" << t << "\" [style=dashed];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace scfi::cfg

#endif  // SCFI_CFG_HPP_
