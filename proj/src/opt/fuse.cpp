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

bool prefix_op(Op op) { return ir::is_float_arith(op) || ir::is_index_arith(op) || op == Op::IToF; }

// A perfect pfor nest: every level is a single-block pfor whose body is pure
// arithmetic followed by the next level; the innermost body (the leaf) holds
// no pfor, detach or call.
struct Nest {
  std::vector<Instr*> levels;

  std::vector<Instr>& body(std::size_t k) { return levels[k]->region().blocks[0].instrs; }
  std::vector<Instr>& leaf() { return body(levels.size() - 1); }
};

bool leaf_ok(const std::vector<Instr>& instrs) {
  bool ok = true;
  std::function<void(const Instr&)> check = [&](const Instr& in) {
    if (in.op == Op::PFor || in.op == Op::Detach || in.op == Op::Call || in.op == Op::Alloc ||
        in.op == Op::ConstBuf) {
      ok = false;
    }
    for (const Region& r : in.body) ir::for_each_instr(r, check);
  };
  for (const Instr& in : instrs) check(in);
  return ok;
}

std::optional<Nest> analyse(Instr& outer) {
  Nest nest;
  Instr* cur = &outer;
  while (true) {
    if (cur->op != Op::PFor || cur->grain != 0 || cur->strip || cur->region().blocks.size() != 1) return std::nullopt;
    nest.levels.push_back(cur);
    auto& ins = cur->region().blocks[0].instrs;
    const std::size_t n = ins.size();
    std::size_t pfors = 0;
    for (const Instr& in : ins) pfors += in.op == Op::PFor;
    if (pfors == 0) {
      if (!leaf_ok(ins)) return std::nullopt;
      return nest;
    }
    if (pfors != 1 || n < 2 || ins[n - 2].op != Op::PFor) return std::nullopt;
    for (std::size_t i = 0; i + 2 < n; ++i) {
      if (!prefix_op(ins[i].op)) return std::nullopt;
    }
    cur = &ins[n - 2];
  }
}

// Syntactic index expressions over the nest's induction variables.
class Exprs {
 public:
  Exprs(Nest& nest, const std::vector<int>& defs) : defs_(defs) {
    for (std::size_t k = 0; k < nest.levels.size(); ++k) {
      iv_[nest.levels[k]->dst] = "iv" + std::to_string(k);
      for (const Instr& in : nest.body(k)) {
        if (in.dst >= 0 && !in.is_loop()) def_[in.dst] = &in;
      }
      ir::for_each_instr(nest.levels[k]->region(), [&](const Instr& in) {
        if (in.dst >= 0) inside_.insert(in.dst);
      });
    }
  }

  std::string of(const Operand& o) {
    if (o.kind == Operand::Kind::Int) return "#" + std::to_string(o.i);
    if (!o.is_reg()) return "?" + std::to_string(unknown_++);
    if (auto it = iv_.find(o.reg); it != iv_.end()) return it->second;
    if (!inside_.count(o.reg)) return "r" + std::to_string(o.reg);
    auto it = def_.find(o.reg);
    if (it == def_.end() || defs_[static_cast<std::size_t>(o.reg)] != 1 || !ir::is_index_arith(it->second->op)) {
      return "?" + std::to_string(unknown_++);
    }
    const Instr& def = *it->second;
    if (def.op == Op::IMov) return of(def.args[0]);
    // x + 0, x - 0 and x * 1 are x
    auto is = [](const Operand& o, std::int64_t v) { return o.kind == Operand::Kind::Int && o.i == v; };
    if ((def.op == Op::IAdd || def.op == Op::ISub) && is(def.args[1], 0)) return of(def.args[0]);
    if (def.op == Op::IAdd && is(def.args[0], 0)) return of(def.args[1]);
    if (def.op == Op::IMul && is(def.args[1], 1)) return of(def.args[0]);
    if (def.op == Op::IMul && is(def.args[0], 1)) return of(def.args[1]);
    std::string s(ir::to_string(it->second->op));
    s += "(";
    for (std::size_t k = 0; k < it->second->args.size(); ++k) s += (k ? "," : "") + of(it->second->args[k]);
    return s + ")";
  }

  static bool known(const std::string& e) { return e.find('?') == std::string::npos; }

 private:
  const std::vector<int>& defs_;
  std::map<int, std::string> iv_;
  std::map<int, const Instr*> def_;
  std::set<int> inside_;
  int unknown_ = 0;
};

struct Access {
  int buf;
  std::string index;
};

struct Accesses {
  std::vector<Access> loads, stores;
};

Accesses accesses(Nest& nest, Exprs& ex) {
  Accesses a;
  std::function<void(const Instr&)> visit = [&](const Instr& in) {
    if (in.op == Op::Load) a.loads.push_back({in.args[0].reg, ex.of(in.args[1])});
    if (in.op == Op::Store) a.stores.push_back({in.args[0].reg, ex.of(in.args[1])});
    for (const Region& r : in.body) ir::for_each_instr(r, visit);
  };
  for (const Instr& in : nest.leaf()) visit(in);
  return a;
}

bool same_bounds(Nest& a, Nest& b) {
  if (a.levels.size() != b.levels.size()) return false;
  for (std::size_t k = 0; k < a.levels.size(); ++k) {
    if (!(a.levels[k]->args[0] == b.levels[k]->args[0]) || !(a.levels[k]->args[1] == b.levels[k]->args[1])) {
      return false;
    }
  }
  return true;
}

// The second nest may read what the first writes only at the index the first
// wrote it, and may not touch anything else the first writes; the first may
// not touch what the second writes.
bool legal(Accesses& first, Accesses& second) {
  std::map<int, std::set<std::string>> written;
  for (const auto& s : first.stores) written[s.buf].insert(s.index);
  for (const auto& l : second.loads) {
    auto it = written.find(l.buf);
    if (it == written.end()) continue;
    if (it->second.size() != 1 || *it->second.begin() != l.index || !Exprs::known(l.index)) return false;
  }
  for (const auto& s : second.stores) {
    if (written.count(s.buf)) return false;
  }
  std::set<int> second_writes;
  for (const auto& s : second.stores) second_writes.insert(s.buf);
  for (const auto& l : first.loads) {
    if (second_writes.count(l.buf)) return false;
  }
  return true;
}

void substitute(std::vector<Instr>& instrs, const std::map<int, int>& map) {
  std::function<void(Instr&)> visit = [&](Instr& in) {
    detail::for_each_use(in, [&](Operand& o) {
      if (auto it = map.find(o.reg); it != map.end()) o.reg = it->second;
    });
    for (Region& r : in.body) ir::for_each_instr(r, visit);
  };
  for (Instr& in : instrs) visit(in);
}

// Invalidates the level pointers of `a` below the outermost one.
void merge(Nest& a, Nest& b) {
  std::map<int, int> ivs;
  for (std::size_t k = 0; k < a.levels.size(); ++k) ivs[b.levels[k]->dst] = a.levels[k]->dst;
  for (std::size_t k = b.levels.size(); k-- > 0;) {
    auto& ins = b.body(k);
    const bool leaf = k + 1 == b.levels.size();
    // the inner pfor is handled at its own level
    std::vector<Instr> own(ins.begin(), ins.end() - (leaf ? 1 : 2));
    substitute(own, ivs);
    auto& target = a.body(k);
    const std::size_t insert_at = target.size() - (leaf ? 1 : 2);
    target.insert(target.begin() + static_cast<std::ptrdiff_t>(insert_at), own.begin(), own.end());
  }
}

class Fuser {
 public:
  explicit Fuser(FjFunction& fn) : fn_(fn) {}

  void run() {
    while (fuse_region(fn_.body)) {
    }
    demote_dead_buffers();
  }

 private:
  bool fuse_region(Region& region) {
    for (auto& blk : region.blocks) {
      auto& instrs = blk.instrs;
      for (std::size_t i = 0; i + 1 < instrs.size(); ++i) {
        if (instrs[i].op != Op::PFor || instrs[i + 1].op != Op::PFor) continue;
        std::set<int> produced;
        if (try_fuse(instrs[i], instrs[i + 1], produced)) {
          instrs.erase(instrs.begin() + static_cast<std::ptrdiff_t>(i) + 1);
          if (auto merged = analyse(instrs[i])) forward(*merged, produced);
          return true;
        }
      }
      for (Instr& in : instrs) {
        for (Region& r : in.body) {
          if (fuse_region(r)) return true;
        }
      }
    }
    return false;
  }

  // Merges `second` into `first` when legal; `produced` receives the buffers
  // `first` wrote.
  bool try_fuse(Instr& first, Instr& second, std::set<int>& produced) {
    auto a = analyse(first);
    auto b = analyse(second);
    if (!a || !b || !same_bounds(*a, *b)) return false;
    const auto defs = detail::def_counts(fn_);
    Exprs ea(*a, defs), eb(*b, defs);
    auto aa = accesses(*a, ea);
    auto ab = accesses(*b, eb);
    if (!legal(aa, ab)) return false;
    for (const auto& s : aa.stores) produced.insert(s.buf);
    merge(*a, *b);
    return true;
  }

  // Replaces top-level leaf loads of a buffer the same leaf stored at the same
  // index with the stored value.
  void forward(Nest& nest, const std::set<int>& bufs) {
    const auto defs = detail::def_counts(fn_);
    Exprs ex(nest, defs);
    struct Pending {
      std::string index;
      Operand value;
    };
    std::map<int, Pending> last;
    for (Instr& in : nest.leaf()) {
      if (in.op == Op::Load && bufs.count(in.args[0].reg)) {
        auto it = last.find(in.args[0].reg);
        const std::string idx = ex.of(in.args[1]);
        if (it != last.end() && it->second.index == idx && Exprs::known(idx)) {
          const Operand value = it->second.value;
          in.op = Op::FMov;
          in.args = {value};
          demoted_.insert(it->first);
        }
      }
      // effects of `in` on the pending stores
      std::function<void(const Instr&, bool)> effects = [&](const Instr& x, bool top) {
        if (x.op == Op::Store) {
          if (top) {
            last[x.args[0].reg] = Pending{ex.of(x.args[1]), x.args[2]};
          } else {
            last.erase(x.args[0].reg);
          }
        }
        if (x.dst >= 0) {
          for (auto it = last.begin(); it != last.end();) {
            it = it->second.value.is_reg() && it->second.value.reg == x.dst ? last.erase(it) : std::next(it);
          }
        }
        for (const Region& r : x.body) ir::for_each_instr(r, [&](const Instr& y) { effects(y, false); });
      };
      effects(in, true);
    }
  }

  // Buffers whose loads were all forwarded lose their stores and allocation;
  // index arithmetic of forwarded loads goes with them.
  void demote_dead_buffers() {
    if (demoted_.empty()) return;
    std::set<int> read;
    ir::for_each_instr(fn_.body, [&](const Instr& in) {
      if (in.op == Op::Load) read.insert(in.args[0].reg);
      if (in.op == Op::Call) {
        for (const auto& o : in.args) {
          if (o.is_reg()) read.insert(o.reg);
        }
      }
    });
    std::set<int> dead;
    ir::for_each_instr(fn_.body, [&](const Instr& in) {
      if (in.op == Op::Alloc && demoted_.count(in.dst) && !read.count(in.dst)) dead.insert(in.dst);
    });
    std::function<void(Region&)> sweep = [&](Region& r) {
      for (auto& blk : r.blocks) {
        std::vector<Instr> kept;
        for (Instr& in : blk.instrs) {
          if ((in.op == Op::Store || in.op == Op::Alloc) &&
              dead.count(in.op == Op::Store ? in.args[0].reg : in.dst)) {
            continue;
          }
          for (Region& inner : in.body) sweep(inner);
          kept.push_back(std::move(in));
        }
        blk.instrs = std::move(kept);
      }
    };
    sweep(fn_.body);
    detail::remove_dead_pure(fn_);
  }

  FjFunction& fn_;
  std::set<int> demoted_;
};

}  // namespace

FjModule fuse_pfors(const FjModule& module) {
  FjModule out = module;
  detail::for_each_transformable(out, [](FjFunction& fn) { Fuser(fn).run(); });
  return out;
}

}  // namespace fjc::opt
