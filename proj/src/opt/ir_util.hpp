#pragma once

// Small helpers shared by the fj-opt passes.

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fjc/ir/fj.hpp"

namespace fjc::opt::detail {

/// Allocates registers with names unique within one function.
class RegNamer {
 public:
  explicit RegNamer(ir::FjFunction& fn);
  int fresh(const std::string& hint, ir::ValueType type);

 private:
  ir::FjFunction& fn_;
  std::set<std::string> names_;
  std::map<std::string, int> counters_;
};

/// Every operand that reads a register, including loop bounds and call args.
void for_each_use(ir::Instr& in, const std::function<void(ir::Operand&)>& fn);
void for_each_use(const ir::Instr& in, const std::function<void(const ir::Operand&)>& fn);

/// Number of instructions defining / reading each register, over the whole
/// function body (loop IVs count as definitions).
std::vector<int> def_counts(const ir::FjFunction& fn);
std::vector<int> use_counts(const ir::FjFunction& fn);

/// Drops pure non-load definitions nobody reads, to a fixpoint. Returns true
/// when anything was removed.
bool remove_dead_pure(ir::FjFunction& fn);

/// Removes blocks unreachable from block 0 and renumbers branch targets.
void prune_unreachable(ir::Region& region);

/// Copy of `region` (a region of `from`) with registers of the namer's
/// function. Registers already in `map` are renamed through it; the rest get
/// fresh registers, recorded in `map`. Block numbering is unchanged.
ir::Region clone_region(const ir::Region& region, const ir::FjFunction& from, RegNamer& namer,
                        std::map<int, int>& map);

/// Registers read inside `region` (recursively) but not defined in it.
std::set<int> free_registers(const ir::Region& region);

/// Applies `fn` to every function a pass may rewrite.
template <typename Fn>
void for_each_transformable(ir::FjModule& module, Fn&& fn) {
  for (auto& [name, f] : module.functions) {
    if (!f.declared && !f.opaque) fn(f);
  }
}

}  // namespace fjc::opt::detail
