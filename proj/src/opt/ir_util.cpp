#include "ir_util.hpp"

#include <deque>

namespace fjc::opt::detail {

using ir::Instr;
using ir::Op;
using ir::Operand;
using ir::Region;

RegNamer::RegNamer(ir::FjFunction& fn) : fn_(fn) {
  for (const auto& r : fn.regs) names_.insert(r.name);
}

int RegNamer::fresh(const std::string& hint, ir::ValueType type) {
  std::string name = hint;
  if (names_.count(name)) {
    int& n = counters_[hint];
    do {
      name = hint + "." + std::to_string(++n);
    } while (names_.count(name));
  }
  names_.insert(name);
  return fn_.add_reg(std::move(name), std::move(type));
}

void for_each_use(Instr& in, const std::function<void(Operand&)>& fn) {
  for (Operand& o : in.args) {
    if (o.is_reg()) fn(o);
  }
}

void for_each_use(const Instr& in, const std::function<void(const Operand&)>& fn) {
  for (const Operand& o : in.args) {
    if (o.is_reg()) fn(o);
  }
}

std::vector<int> def_counts(const ir::FjFunction& fn) {
  std::vector<int> n(fn.regs.size(), 0);
  ir::for_each_instr(fn.body, [&](const Instr& in) {
    if (in.dst >= 0) ++n[static_cast<std::size_t>(in.dst)];
  });
  return n;
}

std::vector<int> use_counts(const ir::FjFunction& fn) {
  std::vector<int> n(fn.regs.size(), 0);
  ir::for_each_instr(fn.body, [&](const Instr& in) {
    for_each_use(in, [&](const Operand& o) { ++n[static_cast<std::size_t>(o.reg)]; });
  });
  return n;
}

bool remove_dead_pure(ir::FjFunction& fn) {
  bool any = false;
  bool changed = true;
  while (changed) {
    changed = false;
    const auto uses = use_counts(fn);
    std::function<void(Region&)> sweep = [&](Region& region) {
      for (auto& blk : region.blocks) {
        std::vector<Instr> kept;
        kept.reserve(blk.instrs.size());
        for (Instr& in : blk.instrs) {
          if (in.dst >= 0 && !in.is_loop() && in.op != Op::Load && ir::is_pure(in.op) &&
              uses[static_cast<std::size_t>(in.dst)] == 0) {
            changed = true;
            continue;
          }
          for (Region& r : in.body) sweep(r);
          kept.push_back(std::move(in));
        }
        blk.instrs = std::move(kept);
      }
    };
    sweep(fn.body);
    any = any || changed;
  }
  return any;
}

void prune_unreachable(Region& region) {
  const std::size_t n = region.blocks.size();
  std::vector<bool> seen(n, false);
  std::deque<std::size_t> work{0};
  seen[0] = true;
  while (!work.empty()) {
    const std::size_t b = work.front();
    work.pop_front();
    if (region.blocks[b].instrs.empty()) continue;
    for (int t : region.blocks[b].instrs.back().targets) {
      if (!seen[static_cast<std::size_t>(t)]) {
        seen[static_cast<std::size_t>(t)] = true;
        work.push_back(static_cast<std::size_t>(t));
      }
    }
  }
  std::vector<int> renumber(n, -1);
  std::vector<ir::Block> kept;
  for (std::size_t b = 0; b < n; ++b) {
    if (!seen[b]) continue;
    renumber[b] = static_cast<int>(kept.size());
    kept.push_back(std::move(region.blocks[b]));
  }
  if (kept.size() == n) {
    region.blocks = std::move(kept);
    return;
  }
  for (auto& blk : kept) {
    for (int& t : blk.instrs.back().targets) t = renumber[static_cast<std::size_t>(t)];
  }
  region.blocks = std::move(kept);
}

Region clone_region(const Region& region, const ir::FjFunction& from, RegNamer& namer,
                    std::map<int, int>& map) {
  auto rename = [&](int reg) {
    auto it = map.find(reg);
    if (it != map.end()) return it->second;
    const auto& r = from.regs[static_cast<std::size_t>(reg)];
    const int fresh = namer.fresh(r.name, r.type);
    map.emplace(reg, fresh);
    return fresh;
  };
  std::function<Region(const Region&)> copy = [&](const Region& r) {
    Region out = r;
    for (std::size_t b = 0; b < r.blocks.size(); ++b) {
      auto& dst_instrs = out.blocks[b].instrs;
      for (std::size_t i = 0; i < dst_instrs.size(); ++i) {
        Instr& in = dst_instrs[i];
        for (Operand& o : in.args) {
          if (o.is_reg()) o.reg = rename(o.reg);
        }
        if (in.dst >= 0) in.dst = rename(in.dst);
        for (std::size_t k = 0; k < in.body.size(); ++k) in.body[k] = copy(r.blocks[b].instrs[i].body[k]);
      }
    }
    return out;
  };
  return copy(region);
}

std::set<int> free_registers(const Region& region) {
  std::set<int> defined;
  std::set<int> used;
  ir::for_each_instr(region, [&](const Instr& in) {
    if (in.dst >= 0) defined.insert(in.dst);
    for_each_use(in, [&](const Operand& o) { used.insert(o.reg); });
  });
  std::set<int> free;
  for (int r : used) {
    if (!defined.count(r)) free.insert(r);
  }
  return free;
}

}  // namespace fjc::opt::detail
