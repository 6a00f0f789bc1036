#include <deque>
#include <functional>
#include <set>

#include "fjc/opt/passes.hpp"
#include "ir_util.hpp"

namespace fjc::opt {

using ir::FjFunction;
using ir::FjModule;
using ir::Instr;
using ir::Op;
using ir::Operand;
using ir::Region;

namespace {

bool inlinable(const FjModule& m, const std::string& name) {
  if (!m.contains(name)) return false;
  const FjFunction& f = m.function(name);
  return f.inline_candidate && !f.opaque && !f.declared;
}

void check_recursion(const FjModule& m) {
  std::map<std::string, std::set<std::string>> edges;
  for (const auto& [name, f] : m.functions) {
    if (!inlinable(m, name)) continue;
    ir::for_each_instr(f.body, [&](const Instr& in) {
      if (in.op == Op::Call && inlinable(m, in.callee)) edges[name].insert(in.callee);
    });
  }
  std::map<std::string, int> state;  // 1 on stack, 2 done
  std::function<void(const std::string&)> dfs = [&](const std::string& n) {
    state[n] = 1;
    for (const auto& next : edges[n]) {
      if (state[next] == 1) throw Error(ErrorKind::RecursionDetected, "inline candidates @" + n + " and @" + next + " form a call cycle");
      if (state[next] == 0) dfs(next);
    }
    state[n] = 2;
  };
  for (const auto& [name, e] : edges) {
    if (state[name] == 0) dfs(name);
  }
}

bool has_top_level_allocs(const FjFunction& f) {
  bool found = false;
  for (const auto& b : f.body.blocks) {
    for (const auto& in : b.instrs) found = found || in.op == Op::Alloc || in.op == Op::ConstBuf;
  }
  return found;
}

// Blocks of a region running in the region's own (non-detached) context.
std::vector<bool> base_context(const Region& r) {
  std::vector<int> ctx(r.blocks.size(), -2);
  std::deque<std::size_t> work{0};
  ctx[0] = -1;
  int next = 0;
  while (!work.empty()) {
    const auto b = work.front();
    work.pop_front();
    const Instr& t = r.blocks[b].instrs.back();
    auto visit = [&](int target, int c) {
      if (ctx[static_cast<std::size_t>(target)] == -2) {
        ctx[static_cast<std::size_t>(target)] = c;
        work.push_back(static_cast<std::size_t>(target));
      }
    };
    if (t.op == Op::Detach) {
      visit(t.targets[0], next++);
      visit(t.targets[1], ctx[b]);
    } else if (t.op != Op::Reattach) {
      for (int target : t.targets) visit(target, ctx[b]);
    }
  }
  std::vector<bool> out(r.blocks.size());
  for (std::size_t b = 0; b < out.size(); ++b) out[b] = ctx[b] == -1;
  return out;
}

class Inliner {
 public:
  Inliner(const FjModule& module, FjFunction& fn) : module_(module), fn_(fn), namer_(fn) {}

  bool run() {
    bool changed = false;
    while (inline_one(fn_.body, true)) changed = true;
    return changed;
  }

 private:
  // Inlines the first eligible call found in `region`; true on success.
  bool inline_one(Region& region, bool top_level) {
    const auto base = base_context(region);
    for (std::size_t b = 0; b < region.blocks.size(); ++b) {
      auto& instrs = region.blocks[b].instrs;
      for (std::size_t i = 0; i < instrs.size(); ++i) {
        Instr& in = instrs[i];
        if (in.op == Op::Call && inlinable(module_, in.callee)) {
          const FjFunction& callee = module_.function(in.callee);
          if (has_top_level_allocs(callee) && !(top_level && base[b])) continue;
          splice(region, b, i, callee);
          return true;
        }
        for (Region& r : in.body) {
          if (inline_one(r, false)) return true;
        }
      }
    }
    return false;
  }

  void splice(Region& region, std::size_t b, std::size_t i, const FjFunction& callee) {
    const Instr call = region.blocks[b].instrs[i];
    std::map<int, int> map;
    std::vector<Instr> prologue;
    for (std::size_t p = 0; p < callee.params.size(); ++p) {
      const int preg = callee.params[p].reg;
      const Operand& arg = call.args[p];
      if (arg.is_reg()) {
        map[preg] = arg.reg;
        continue;
      }
      // immediate argument: bind it to a fresh register
      const auto& r = callee.regs[static_cast<std::size_t>(preg)];
      const int fresh = namer_.fresh(r.name, r.type);
      map[preg] = fresh;
      Instr mov;
      mov.op = r.type.kind == ir::ValueKind::I64 ? Op::IMov : Op::FMov;
      mov.dst = fresh;
      mov.args = {arg};
      prologue.push_back(std::move(mov));
    }
    Region body = detail::clone_region(callee.body, callee, namer_, map);

    auto& blocks = region.blocks;
    std::vector<Instr> before(blocks[b].instrs.begin(), blocks[b].instrs.begin() + static_cast<std::ptrdiff_t>(i));
    std::vector<Instr> after(blocks[b].instrs.begin() + static_cast<std::ptrdiff_t>(i) + 1, blocks[b].instrs.end());
    before.insert(before.end(), prologue.begin(), prologue.end());

    if (body.blocks.size() == 1) {
      auto& inner = body.blocks[0].instrs;
      inner.pop_back();  // ret
      before.insert(before.end(), inner.begin(), inner.end());
      before.insert(before.end(), after.begin(), after.end());
      blocks[b].instrs = std::move(before);
      return;
    }
    // Multi-block callee: b jumps into the callee's blocks, whose returns
    // jump to a new continuation block holding the rest of b.
    const int offset = static_cast<int>(blocks.size());
    const int cont = offset + static_cast<int>(body.blocks.size());
    for (auto& blk : body.blocks) {
      Instr& t = blk.instrs.back();
      for (int& target : t.targets) target += offset;
      if (t.op == Op::Ret) {
        t.op = Op::Br;
        t.targets = {cont};
      }
    }
    Instr jump;
    jump.op = Op::Br;
    jump.targets = {offset};
    before.push_back(std::move(jump));
    blocks[b].instrs = std::move(before);
    for (auto& blk : body.blocks) blocks.push_back(std::move(blk));
    ir::Block tail;
    tail.instrs = std::move(after);
    blocks.push_back(std::move(tail));
  }

  const FjModule& module_;
  FjFunction& fn_;
  detail::RegNamer namer_;
};

}  // namespace

FjModule inline_calls(const FjModule& module) {
  check_recursion(module);
  FjModule out = module;
  detail::for_each_transformable(out, [&](FjFunction& fn) { Inliner(module, fn).run(); });

  // Drop inline candidates nobody calls any more.
  std::set<std::string> called;
  for (const auto& [name, f] : out.functions) {
    ir::for_each_instr(f.body, [&](const Instr& in) {
      if (in.op == Op::Call) called.insert(in.callee);
    });
  }
  for (auto it = out.functions.begin(); it != out.functions.end();) {
    const bool drop = inlinable(out, it->first) && it->first != out.entry && !called.count(it->first);
    it = drop ? out.functions.erase(it) : std::next(it);
  }
  return out;
}

}  // namespace fjc::opt
