#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>

#include "fjc/opt/passes.hpp"

namespace fjc::opt {

using ir::Instr;
using ir::Op;

namespace {

// Loop bounds as base register plus constant offset, so that [%r + a, %r + b)
// has the static trip count b - a.
class Bounds {
 public:
  explicit Bounds(const ir::Region& region) {
    std::map<int, int> count;
    ir::for_each_instr(region, [&](const Instr& in) {
      if (in.dst < 0) return;
      ++count[in.dst];
      def_[in.dst] = &in;
    });
    for (const auto& [reg, n] : count) {
      if (n != 1) def_.erase(reg);
    }
  }

  std::optional<std::int64_t> trip(const Instr& loop) const {
    const auto lo = linear(loop.args[0], 0);
    const auto hi = linear(loop.args[1], 0);
    if (lo.first != hi.first) return std::nullopt;
    return std::max<std::int64_t>(0, hi.second - lo.second);
  }

 private:
  std::pair<int, std::int64_t> linear(const ir::Operand& o, int depth) const {
    if (o.is_imm()) return {-1, o.i};
    auto it = def_.find(o.reg);
    if (it == def_.end() || depth > 32) return {o.reg, 0};
    const Instr& in = *it->second;
    if (in.op == Op::IMov) return linear(in.args[0], depth + 1);
    if (in.op == Op::IAdd || in.op == Op::ISub) {
      const auto& a = in.args[0];
      const auto& b = in.args[1];
      if (b.is_imm()) {
        auto base = linear(a, depth + 1);
        return {base.first, base.second + (in.op == Op::IAdd ? b.i : -b.i)};
      }
      if (a.is_imm() && in.op == Op::IAdd) {
        auto base = linear(b, depth + 1);
        return {base.first, base.second + a.i};
      }
    }
    return {o.reg, 0};
  }

  std::map<int, const Instr*> def_;
};

struct Estimator {
  const ir::FjModule* module;
  std::set<std::string> active;  // callees being costed, to cut recursion
  CostEstimate est;
  const Bounds* bounds = nullptr;

  void add(const char* cls, std::int64_t count, std::int64_t unit) {
    est.breakdown[cls] += count;
    est.units += count * unit;
  }

  std::int64_t callee_cost(const std::string& name) {
    if (!module || !module->contains(name)) {
      est.lower_bound = true;
      return kUnknownCalleeCost;
    }
    const ir::FjFunction& f = module->function(name);
    if (f.cost) return *f.cost;
    if (f.opaque || f.declared || active.count(name)) {
      est.lower_bound = true;
      return kUnknownCalleeCost;
    }
    active.insert(name);
    const Bounds callee_bounds(f.body);
    Estimator inner{module, active, {}, &callee_bounds};
    inner.region(f.body, 1);
    active.erase(name);
    est.lower_bound = est.lower_bound || inner.est.lower_bound;
    return inner.est.units;
  }

  void region(const ir::Region& r, std::int64_t weight) {
    for (const auto& b : r.blocks) {
      for (const Instr& in : b.instrs) instr(in, weight);
    }
  }

  void instr(const Instr& in, std::int64_t weight) {
    switch (in.op) {
      case Op::FExp:
      case Op::FTanh:
      case Op::FSigmoid:
        add("transcendental", weight, kTranscendentalCost);
        return;
      case Op::FFma:
        add("fma", weight, kArithCost);
        return;
      case Op::Load:
      case Op::Store:
        add("memory", weight, kMemoryCost);
        return;
      case Op::IToF:
        add("arith", weight, kArithCost);
        return;
      case Op::Call:
        add("call", weight, kCallCost);
        add("callee", weight * callee_cost(in.callee), 1);
        return;
      case Op::PFor:
      case Op::For: {
        std::int64_t trip = 1;
        if (auto t = bounds->trip(in)) {
          trip = *t;
        } else {
          est.lower_bound = true;
        }
        region(in.region(), weight * trip);
        return;
      }
      default:
        break;
    }
    if (ir::is_float_arith(in.op)) {
      add("arith", weight, kArithCost);
    } else if (ir::is_index_arith(in.op)) {
      add("index", weight, kArithCost);
    }
  }
};

}  // namespace

CostEstimate estimate_cost(const ir::Region& region, const ir::FjModule* module) {
  const Bounds bounds(region);
  Estimator e{module, {}, {}, &bounds};
  e.region(region, 1);
  return e.est;
}

void PassConfig::validate() const {
  if (spawn_cost <= 0) throw Error(ErrorKind::InvalidAttribute, "spawn cost must be positive");
  if (!(serialize_factor > 0.0) || !std::isfinite(serialize_factor)) {
    throw Error(ErrorKind::InvalidAttribute, "serialize factor must be positive");
  }
  if (workers_hint < 1) throw Error(ErrorKind::InvalidAttribute, "workers hint must be >= 1");
  if (grain_override && *grain_override < 1) throw Error(ErrorKind::InvalidAttribute, "grain must be >= 1");
}

std::int64_t default_grain(std::int64_t trip, int workers) {
  const std::int64_t slots = 8 * static_cast<std::int64_t>(std::max(workers, 1));
  const std::int64_t g = (trip + slots - 1) / slots;
  return std::clamp<std::int64_t>(g, 1, 2048);
}

}  // namespace fjc::opt
