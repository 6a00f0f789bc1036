#include "fjc/ir/fj.hpp"

#include <array>
#include <bit>
#include <sstream>

namespace fjc::ir {

std::int64_t ValueType::extent() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string ValueType::to_string() const {
  switch (kind) {
    case ValueKind::F32: return "f32";
    case ValueKind::I64: return "i64";
    case ValueKind::Buf: break;
  }
  std::ostringstream os;
  os << "buf<";
  for (auto d : shape) os << d << "x";
  os << "f32>";
  return os.str();
}

bool Operand::operator==(const Operand& o) const {
  if (kind != o.kind) return false;
  switch (kind) {
    case Kind::Reg: return reg == o.reg;
    case Kind::Int: return i == o.i;
    case Kind::Float: return std::bit_cast<std::uint32_t>(f) == std::bit_cast<std::uint32_t>(o.f);
  }
  return false;
}

namespace {

constexpr std::array<std::string_view, 36> kOpNames = {
    "fadd", "fsub", "fmul", "fdiv", "fmax", "fneg", "fexp", "ftanh", "fsigmoid",
    "ffma", "fmov", "iadd", "isub", "imul", "idiv", "irem", "imin", "imax",
    "ilt", "ieq", "imov", "itof", "load", "store", "alloc", "constbuf", "call", "br",
    "cbr", "ret", "yield", "detach", "reattach", "sync", "pfor", "for"};

}  // namespace

std::string_view to_string(Op op) { return kOpNames[static_cast<std::size_t>(op)]; }

std::optional<Op> parse_op(std::string_view name) {
  for (std::size_t i = 0; i < kOpNames.size(); ++i) {
    if (kOpNames[i] == name) return static_cast<Op>(i);
  }
  return std::nullopt;
}

bool is_terminator(Op op) {
  switch (op) {
    case Op::Br:
    case Op::CBr:
    case Op::Ret:
    case Op::Yield:
    case Op::Detach:
    case Op::Reattach:
      return true;
    default:
      return false;
  }
}

bool is_float_arith(Op op) { return op >= Op::FAdd && op <= Op::FMov; }
bool is_index_arith(Op op) { return op >= Op::IAdd && op <= Op::IMov; }

int arith_arity(Op op) {
  switch (op) {
    case Op::FNeg:
    case Op::FExp:
    case Op::FTanh:
    case Op::FSigmoid:
    case Op::FMov:
    case Op::IMov:
    case Op::IToF:
      return 1;
    case Op::FFma:
      return 3;
    default:
      return (is_float_arith(op) || is_index_arith(op)) ? 2 : -1;
  }
}

bool is_pure(Op op) {
  return is_float_arith(op) || is_index_arith(op) || op == Op::IToF || op == Op::Load;
}

int FjFunction::add_reg(std::string name, ValueType type) {
  regs.push_back(Register{std::move(name), std::move(type)});
  return static_cast<int>(regs.size()) - 1;
}

bool FjFunction::is_param(int reg) const {
  for (const auto& p : params) {
    if (p.reg == reg) return true;
  }
  return false;
}

const FjFunction& FjModule::function(const std::string& name) const {
  auto it = functions.find(name);
  if (it == functions.end()) throw Error(ErrorKind::KernelMissing, "no function @" + name);
  return it->second;
}

FjFunction& FjModule::function(const std::string& name) {
  auto it = functions.find(name);
  if (it == functions.end()) throw Error(ErrorKind::KernelMissing, "no function @" + name);
  return it->second;
}

void FjModule::add(FjFunction fn) {
  if (functions.count(fn.name)) throw Error(ErrorKind::DuplicateSymbol, "duplicate function @" + fn.name);
  std::string name = fn.name;
  functions.emplace(std::move(name), std::move(fn));
}

void for_each_instr(const Region& region, const std::function<void(const Instr&)>& fn) {
  for (const Block& b : region.blocks) {
    for (const Instr& in : b.instrs) {
      fn(in);
      for (const Region& r : in.body) for_each_instr(r, fn);
    }
  }
}

void for_each_instr(Region& region, const std::function<void(Instr&)>& fn) {
  for (Block& b : region.blocks) {
    for (Instr& in : b.instrs) {
      fn(in);
      for (Region& r : in.body) for_each_instr(r, fn);
    }
  }
}

ConstructCounts count_constructs(const FjFunction& fn) {
  ConstructCounts c;
  for_each_instr(fn.body, [&](const Instr& in) {
    ++c.instrs;
    switch (in.op) {
      case Op::Detach: ++c.detaches; break;
      case Op::Reattach: ++c.reattaches; break;
      case Op::PFor: ++c.pfors; break;
      case Op::For: ++c.fors; break;
      case Op::Sync: ++c.syncs; break;
      case Op::Call: ++c.calls; break;
      case Op::Alloc: ++c.allocs; break;
      default: break;
    }
  });
  return c;
}

ConstructCounts count_constructs(const FjModule& module) {
  ConstructCounts total;
  for (const auto& [name, fn] : module.functions) {
    const auto c = count_constructs(fn);
    total.detaches += c.detaches;
    total.reattaches += c.reattaches;
    total.pfors += c.pfors;
    total.fors += c.fors;
    total.syncs += c.syncs;
    total.calls += c.calls;
    total.allocs += c.allocs;
    total.instrs += c.instrs;
  }
  return total;
}

void elide_region(Region& region) {
  for (Block& b : region.blocks) {
    std::vector<Instr> kept;
    kept.reserve(b.instrs.size());
    for (Instr& in : b.instrs) {
      switch (in.op) {
        case Op::Sync:
          continue;
        case Op::Detach:
          in.op = Op::Br;
          in.targets.resize(1);
          break;
        case Op::Reattach:
          in.op = Op::Br;
          break;
        case Op::PFor:
          in.op = Op::For;
          in.grain = 0;
          in.strip.reset();
          break;
        default:
          break;
      }
      for (Region& r : in.body) elide_region(r);
      kept.push_back(std::move(in));
    }
    b.instrs = std::move(kept);
  }
}

FjModule serial_elision(const FjModule& module) {
  verify_or_throw(module);
  FjModule out = module;
  for (auto& [name, fn] : out.functions) elide_region(fn.body);
  return out;
}

}  // namespace fjc::ir
