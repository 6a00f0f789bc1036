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

Instr arith(Op op, int dst, std::vector<Operand> args) {
  Instr in;
  in.op = op;
  in.dst = dst;
  in.args = std::move(args);
  return in;
}

Instr branch(Op op, std::vector<int> targets, std::vector<Operand> args = {}) {
  Instr in;
  in.op = op;
  in.targets = std::move(targets);
  in.args = std::move(args);
  return in;
}

// ---------------------------------------------------------------------------
// strip_mine

class StripMiner {
 public:
  StripMiner(FjFunction& fn, const PassConfig& config) : namer_(fn), config_(config) {}

  void region(Region& r) {
    for (auto& blk : r.blocks) {
      for (Instr& in : blk.instrs) {
        for (Region& inner : in.body) region(inner);
        if (eligible(in)) strip(in);
      }
    }
  }

 private:
  static bool eligible(const Instr& in) {
    return in.op == Op::PFor && in.grain == 0 && !in.strip && in.args[0].is_imm() && in.args[1].is_imm() &&
           in.args[1].i > in.args[0].i;
  }

  void strip(Instr& loop) {
    const std::int64_t lo = loop.args[0].i;
    const std::int64_t hi = loop.args[1].i;
    const std::int64_t n = hi - lo;
    const std::int64_t g = config_.grain_override.value_or(default_grain(n, config_.workers_hint));
    const std::int64_t chunks = (n + g - 1) / g;

    const auto i64 = ir::ValueType::i64();
    const int c = namer_.fresh("c", i64);
    const int start = namer_.fresh("s", i64);
    const int stop = namer_.fresh("e", i64);
    ir::Block blk;
    if (lo == 0) {
      blk.instrs.push_back(arith(Op::IMul, start, {Operand::r(c), Operand::imm(g)}));
    } else {
      const int scaled = namer_.fresh("s", i64);
      blk.instrs.push_back(arith(Op::IMul, scaled, {Operand::r(c), Operand::imm(g)}));
      blk.instrs.push_back(arith(Op::IAdd, start, {Operand::r(scaled), Operand::imm(lo)}));
    }
    const int bound = namer_.fresh("e", i64);
    blk.instrs.push_back(arith(Op::IAdd, bound, {Operand::r(start), Operand::imm(g)}));
    blk.instrs.push_back(arith(Op::IMin, stop, {Operand::r(bound), Operand::imm(hi)}));

    Instr inner;
    inner.op = Op::For;
    inner.dst = loop.dst;
    inner.args = {Operand::r(start), Operand::r(stop)};
    inner.body = std::move(loop.body);
    blk.instrs.push_back(std::move(inner));
    blk.instrs.push_back(branch(Op::Yield, {}));

    loop.dst = c;
    loop.args = {Operand::imm(0), Operand::imm(chunks)};
    loop.grain = 1;
    loop.strip = ir::StripInfo{g, n};
    loop.body.clear();
    loop.body.emplace_back();
    loop.body[0].blocks.push_back(std::move(blk));
  }

  detail::RegNamer namer_;
  const PassConfig& config_;
};

// ---------------------------------------------------------------------------
// serialize_small_tasks

const Instr* chunk_loop(const Instr& pfor) {
  for (const auto& blk : pfor.region().blocks) {
    for (const Instr& in : blk.instrs) {
      if (in.op == Op::For) return &in;
    }
  }
  return nullptr;
}

class Serializer {
 public:
  Serializer(const FjModule& module, const PassConfig& config)
      : module_(module),
        threshold_(config.serialize_factor * static_cast<double>(config.spawn_cost)) {}

  void region(Region& r) {
    for (auto& blk : r.blocks) {
      for (Instr& in : blk.instrs) {
        if (in.op == Op::PFor) {
          if (auto work = pfor_work(in); work && static_cast<double>(*work) < threshold_) {
            in.op = Op::For;
            in.grain = 0;
            in.strip.reset();
            ir::elide_region(in.region());
            continue;
          }
        }
        for (Region& inner : in.body) region(inner);
      }
    }
    for (std::size_t b = 0; b < r.blocks.size(); ++b) {
      Instr& t = r.blocks[b].instrs.back();
      if (t.op != Op::Detach) continue;
      auto& task = r.blocks[static_cast<std::size_t>(t.targets[0])].instrs;
      if (task.back().op != Op::Reattach) continue;
      Region single;
      single.blocks.push_back(ir::Block{task});
      if (static_cast<double>(estimate_cost(single, &module_).units) >= threshold_) continue;
      task.back().op = Op::Br;
      t.op = Op::Br;
      t.targets = {t.targets[0]};
    }
  }

 private:
  std::optional<std::int64_t> pfor_work(const Instr& in) const {
    if (in.strip) {
      const Instr* inner = chunk_loop(in);
      if (!inner) return std::nullopt;
      return in.strip->trip * estimate_cost(inner->region(), &module_).units;
    }
    if (!in.args[0].is_imm() || !in.args[1].is_imm()) return std::nullopt;
    const std::int64_t trip = std::max<std::int64_t>(0, in.args[1].i - in.args[0].i);
    return trip * estimate_cost(in.region(), &module_).units;
  }

  const FjModule& module_;
  double threshold_;
};

// ---------------------------------------------------------------------------
// loop_spawn

class Spawner {
 public:
  Spawner(FjModule& module, std::set<std::string>& names) : module_(module), names_(names) {}

  // Rewrites `fn`; returns the helpers it created.
  std::vector<FjFunction> run(FjFunction& fn) {
    fn_ = &fn;
    helpers_.clear();
    region(fn.body);
    return std::move(helpers_);
  }

 private:
  void region(Region& r) {
    for (auto& blk : r.blocks) {
      for (Instr& in : blk.instrs) {
        if (in.op == Op::PFor && in.strip) {
          const bool single = in.args[0].is_imm() && in.args[1].is_imm() && in.args[1].i - in.args[0].i <= 1;
          if (!single) {
            outline(in);
            continue;
          }
          in.op = Op::For;
          in.grain = 0;
          in.strip.reset();
        }
        for (Region& inner : in.body) region(inner);
      }
    }
  }

  std::string helper_name() {
    for (int k = 0;; ++k) {
      std::string name = fn_->name + ".spawn" + std::to_string(k);
      if (!names_.count(name)) {
        names_.insert(name);
        return name;
      }
    }
  }

  std::set<int> written_buffers(const Region& r) const {
    std::set<int> out;
    ir::for_each_instr(r, [&](const Instr& in) {
      if (in.op == Op::Store) out.insert(in.args[0].reg);
      if (in.op == Op::Call && module_.contains(in.callee)) {
        const auto& callee = module_.function(in.callee);
        for (std::size_t k = 0; k < in.args.size() && k < callee.params.size(); ++k) {
          if (callee.params[k].out && in.args[k].is_reg()) out.insert(in.args[k].reg);
        }
      }
    });
    return out;
  }

  void outline(Instr& loop) {
    std::set<int> caps = detail::free_registers(loop.region());
    caps.erase(loop.dst);
    const auto written = written_buffers(loop.region());

    FjFunction h;
    h.name = helper_name();
    std::map<int, int> map;
    std::vector<Operand> cap_args;
    auto add_param = [&](const std::string& name, ir::ValueType type, bool out) {
      const int reg = h.add_reg(name, std::move(type));
      h.params.push_back({reg, out});
      return reg;
    };
    const auto i64 = ir::ValueType::i64();
    const int lo = add_param("lo", i64, false);
    const int hi = add_param("hi", i64, false);
    for (int c : caps) {
      const auto& r = fn_->regs[static_cast<std::size_t>(c)];
      std::string name = r.name == "lo" || r.name == "hi" ? r.name + ".cap" : r.name;
      map[c] = add_param(name, r.type, written.count(c) != 0);
      cap_args.push_back(Operand::r(c));
    }
    detail::RegNamer namer(h);
    const int n = namer.fresh("n", i64);
    const int big = namer.fresh("big", i64);
    const int half = namer.fresh("half", i64);
    const int mid = namer.fresh("mid", i64);
    const int iv = namer.fresh(fn_->regs[static_cast<std::size_t>(loop.dst)].name, i64);
    map[loop.dst] = iv;
    Region body = detail::clone_region(loop.region(), *fn_, namer, map);

    auto call = [&](Operand a, Operand b) {
      Instr in;
      in.op = Op::Call;
      in.callee = h.name;
      in.args = {a, b};
      for (int c : caps) in.args.push_back(Operand::r(map.at(c)));
      return in;
    };

    constexpr int kSplit = 1, kTask = 2, kCont = 3, kLeaf = 4, kBody = 5;
    std::vector<ir::Block> blocks(kBody);
    blocks[0].instrs = {arith(Op::ISub, n, {Operand::r(hi), Operand::r(lo)}),
                        arith(Op::ILt, big, {Operand::imm(1), Operand::r(n)}),
                        branch(Op::CBr, {kSplit, kLeaf}, {Operand::r(big)})};
    blocks[kSplit].instrs = {arith(Op::IDiv, half, {Operand::r(n), Operand::imm(2)}),
                             arith(Op::IAdd, mid, {Operand::r(lo), Operand::r(half)}),
                             branch(Op::Detach, {kTask, kCont})};
    blocks[kTask].instrs = {call(Operand::r(lo), Operand::r(mid)), branch(Op::Reattach, {kCont})};
    blocks[kCont].instrs = {call(Operand::r(mid), Operand::r(hi)), branch(Op::Sync, {}), branch(Op::Ret, {})};
    blocks[kLeaf].instrs = {arith(Op::IMov, iv, {Operand::r(lo)}), branch(Op::Br, {kBody})};
    for (auto& blk : body.blocks) {
      Instr& t = blk.instrs.back();
      for (int& target : t.targets) target += kBody;
      if (t.op == Op::Yield) t.op = Op::Ret;
      blocks.push_back(std::move(blk));
    }
    h.body.blocks = std::move(blocks);

    Instr site;
    site.op = Op::Call;
    site.callee = h.name;
    site.args = {loop.args[0], loop.args[1]};
    site.args.insert(site.args.end(), cap_args.begin(), cap_args.end());
    loop = std::move(site);
    helpers_.push_back(std::move(h));
  }

  FjModule& module_;
  std::set<std::string>& names_;
  FjFunction* fn_ = nullptr;
  std::vector<FjFunction> helpers_;
};

}  // namespace

FjModule strip_mine(const FjModule& module, const PassConfig& config) {
  config.validate();
  FjModule out = module;
  detail::for_each_transformable(out, [&](FjFunction& fn) { StripMiner(fn, config).region(fn.body); });
  return out;
}

FjModule serialize_small_tasks(const FjModule& module, const PassConfig& config) {
  config.validate();
  FjModule out = module;
  detail::for_each_transformable(out, [&](FjFunction& fn) { Serializer(module, config).region(fn.body); });
  return out;
}

FjModule loop_spawn(const FjModule& module) {
  FjModule out = module;
  std::set<std::string> names;
  std::deque<std::string> work;
  for (const auto& [name, f] : out.functions) {
    names.insert(name);
    if (!f.declared && !f.opaque) work.push_back(name);
  }
  Spawner spawner(out, names);
  while (!work.empty()) {
    const std::string name = work.front();
    work.pop_front();
    auto helpers = spawner.run(out.function(name));
    for (auto& h : helpers) {
      work.push_back(h.name);
      out.add(std::move(h));
    }
  }
  return out;
}

}  // namespace fjc::opt
