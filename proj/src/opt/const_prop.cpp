#include <optional>

#include "fjc/opt/passes.hpp"
#include "fjc/scalar_ops.hpp"
#include "ir_util.hpp"

namespace fjc::opt {

using ir::FjFunction;
using ir::FjModule;
using ir::Instr;
using ir::Op;
using ir::Operand;
using ir::Region;

namespace {

std::optional<Operand> fold(const Instr& in) {
  for (const Operand& o : in.args) {
    if (!o.is_imm()) return std::nullopt;
  }
  auto f = [&](std::size_t k) { return in.args[k].f; };
  auto i = [&](std::size_t k) { return in.args[k].i; };
  switch (in.op) {
    case Op::FAdd: return Operand::immf(scalar::add(f(0), f(1)));
    case Op::FSub: return Operand::immf(scalar::sub(f(0), f(1)));
    case Op::FMul: return Operand::immf(scalar::mul(f(0), f(1)));
    case Op::FDiv: return Operand::immf(scalar::div(f(0), f(1)));
    case Op::FMax: return Operand::immf(scalar::max(f(0), f(1)));
    case Op::FNeg: return Operand::immf(scalar::neg(f(0)));
    case Op::FExp: return Operand::immf(scalar::exp(f(0)));
    case Op::FTanh: return Operand::immf(scalar::tanh(f(0)));
    case Op::FSigmoid: return Operand::immf(scalar::sigmoid(f(0)));
    case Op::FFma: return Operand::immf(scalar::fma(f(0), f(1), f(2)));
    case Op::FMov: return Operand::immf(f(0));
    case Op::IAdd: return Operand::imm(scalar::iadd(i(0), i(1)));
    case Op::ISub: return Operand::imm(scalar::isub(i(0), i(1)));
    case Op::IMul: return Operand::imm(scalar::imul(i(0), i(1)));
    case Op::IDiv: return Operand::imm(scalar::idiv(i(0), i(1)));
    case Op::IRem: return Operand::imm(scalar::irem(i(0), i(1)));
    case Op::IMin: return Operand::imm(scalar::imin(i(0), i(1)));
    case Op::IMax: return Operand::imm(scalar::imax(i(0), i(1)));
    case Op::ILt: return Operand::imm(scalar::ilt(i(0), i(1)));
    case Op::IEq: return Operand::imm(scalar::ieq(i(0), i(1)));
    case Op::IMov: return Operand::imm(i(0));
    case Op::IToF: return Operand::immf(static_cast<float>(i(0)));
    default: return std::nullopt;
  }
}

class ConstProp {
 public:
  explicit ConstProp(FjFunction& fn) : fn_(fn) {}

  void run() {
    bool changed = true;
    while (changed) {
      changed = false;
      changed |= propagate();
      changed |= simplify(fn_.body);
      changed |= detail::remove_dead_pure(fn_);
    }
  }

 private:
  // Registers with a single defining instruction that folds to a constant.
  bool propagate() {
    const auto defs = detail::def_counts(fn_);
    std::map<int, Operand> known;
    ir::for_each_instr(fn_.body, [&](const Instr& in) {
      if (in.dst < 0 || in.is_loop() || defs[static_cast<std::size_t>(in.dst)] != 1) return;
      if (!ir::is_pure(in.op)) return;
      if (auto v = fold(in)) known.emplace(in.dst, *v);
    });
    bool changed = false;
    ir::for_each_instr(fn_.body, [&](Instr& in) {
      detail::for_each_use(in, [&](Operand& o) {
        auto it = known.find(o.reg);
        if (it != known.end()) {
          o = it->second;
          changed = true;
        }
      });
    });
    return changed;
  }

  bool simplify(Region& region) {
    bool changed = false;
    for (auto& blk : region.blocks) {
      std::vector<Instr> kept;
      kept.reserve(blk.instrs.size());
      for (Instr& in : blk.instrs) {
        if (in.op == Op::CBr && in.args[0].is_imm()) {
          const int target = in.args[0].i != 0 ? in.targets[0] : in.targets[1];
          in.op = Op::Br;
          in.args.clear();
          in.targets = {target};
          changed = true;
        }
        if (in.is_loop() && in.args[0].is_imm() && in.args[1].is_imm() && in.args[1].i <= in.args[0].i) {
          changed = true;
          continue;
        }
        for (Region& r : in.body) changed |= simplify(r);
        kept.push_back(std::move(in));
      }
      blk.instrs = std::move(kept);
    }
    const auto before = region.blocks.size();
    detail::prune_unreachable(region);
    return changed || region.blocks.size() != before;
  }

  FjFunction& fn_;
};

}  // namespace

FjModule const_prop(const FjModule& module) {
  FjModule out = module;
  detail::for_each_transformable(out, [](FjFunction& fn) { ConstProp(fn).run(); });
  return out;
}

}  // namespace fjc::opt
