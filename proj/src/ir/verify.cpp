#include <deque>
#include <map>
#include <sstream>
#include <tuple>

#include "fjc/ir/fj.hpp"

namespace fjc::ir {

namespace {

class Bits {
 public:
  explicit Bits(std::size_t n = 0, bool value = false)
      : words_((n + 63) / 64, value ? ~std::uint64_t{0} : 0) {}
  bool test(int i) const { return (words_[static_cast<std::size_t>(i) / 64] >> (i % 64)) & 1; }
  void set(int i) { words_[static_cast<std::size_t>(i) / 64] |= std::uint64_t{1} << (i % 64); }
  // Returns true when the intersection changed *this.
  bool intersect(const Bits& o) {
    bool changed = false;
    for (std::size_t w = 0; w < words_.size(); ++w) {
      const auto next = words_[w] & o.words_[w];
      changed |= next != words_[w];
      words_[w] = next;
    }
    return changed;
  }
  friend bool operator==(const Bits&, const Bits&) = default;

 private:
  std::vector<std::uint64_t> words_;
};

enum class Access { ReadOnly, Writable };

class FunctionVerifier {
 public:
  FunctionVerifier(const FjModule& module, const FjFunction& fn, std::vector<FjDiagnostic>& out)
      : module_(module), fn_(fn), out_(out), def_scope_(fn.regs.size(), -1),
        access_(fn.regs.size(), Access::ReadOnly), iv_owner_(fn.regs.size(), 0) {}

  void run() {
    scope_parent_.push_back(-1);  // scope 0: the activation itself
    Bits initial(fn_.regs.size());
    for (const Param& p : fn_.params) {
      if (p.reg < 0 || static_cast<std::size_t>(p.reg) >= fn_.regs.size()) {
        report("", "BadParameter", "parameter register out of range");
        return;
      }
      initial.set(p.reg);
      def_scope_[static_cast<std::size_t>(p.reg)] = 0;
      if (p.out) {
        if (!fn_.type_of(p.reg).is_buf()) report("", "OutParamNotBuffer", name(p.reg) + " is out but not a buffer");
        access_[static_cast<std::size_t>(p.reg)] = Access::Writable;
      }
    }
    if (fn_.body.blocks.empty()) {
      report("", "EmptyFunction", "function has no blocks");
      return;
    }
    check_region(fn_.body, false, 0, initial, "", true);
    for (const auto& [reg, scope, path] : uses_) {
      const int def = def_scope_[static_cast<std::size_t>(reg)];
      if (def >= 0 && !nested_in(scope, def)) {
        report(path, "ScopeEscape", name(reg) + " is defined in a parallel scope it is used outside of");
      }
    }
  }

 private:
  void report(const std::string& path, std::string rule, std::string message) {
    out_.push_back(FjDiagnostic{fn_.name, path.empty() ? "^bb0" : path, std::move(rule), std::move(message)});
  }

  std::string name(int reg) const {
    if (reg < 0 || static_cast<std::size_t>(reg) >= fn_.regs.size()) return "%<invalid>";
    return "%" + fn_.regs[static_cast<std::size_t>(reg)].name;
  }

  bool valid_reg(int reg) const { return reg >= 0 && static_cast<std::size_t>(reg) < fn_.regs.size(); }

  bool nested_in(int scope, int ancestor) const {
    for (int s = scope; s >= 0; s = scope_parent_[static_cast<std::size_t>(s)]) {
      if (s == ancestor) return true;
    }
    return false;
  }

  int new_scope(int parent) {
    scope_parent_.push_back(parent);
    return static_cast<int>(scope_parent_.size()) - 1;
  }

  static std::string block_path(const std::string& prefix, std::size_t b) {
    return prefix + "^bb" + std::to_string(b);
  }

  // Structural shape of every block; returns false when the CFG cannot be
  // analysed further.
  bool check_structure(const Region& r, bool loop_body, const std::string& prefix) {
    bool ok = true;
    const auto nblocks = static_cast<int>(r.blocks.size());
    for (std::size_t b = 0; b < r.blocks.size(); ++b) {
      const Block& blk = r.blocks[b];
      const std::string path = block_path(prefix, b);
      if (blk.instrs.empty() || !is_terminator(blk.instrs.back().op)) {
        report(path, "MissingTerminator", "block does not end in a terminator");
        ok = false;
        continue;
      }
      for (std::size_t i = 0; i + 1 < blk.instrs.size(); ++i) {
        if (is_terminator(blk.instrs[i].op)) {
          report(path, "TerminatorNotLast", std::string(to_string(blk.instrs[i].op)) + " in the middle of a block");
          ok = false;
        }
      }
      const Instr& t = blk.instrs.back();
      std::size_t want = 0;
      switch (t.op) {
        case Op::Br: want = 1; break;
        case Op::CBr: want = 2; break;
        case Op::Detach: want = 2; break;
        case Op::Reattach: want = 1; break;
        default: break;
      }
      if (t.targets.size() != want) {
        report(path, "BadTargets", std::string(to_string(t.op)) + " needs " + std::to_string(want) + " targets");
        ok = false;
        continue;
      }
      for (int target : t.targets) {
        if (target < 0 || target >= nblocks) {
          report(path, "BranchEscapesRegion", "branch target ^bb" + std::to_string(target) + " is not in this region");
          ok = false;
        }
      }
      if (t.op == Op::Ret && loop_body) {
        report(path, "BranchEscapesRegion", "ret inside a loop body");
        ok = false;
      }
      if (t.op == Op::Yield && !loop_body) {
        report(path, "YieldOutsideLoop", "yield outside a loop body");
        ok = false;
      }
      if (t.op == Op::Detach && t.targets.size() == 2 && t.targets[0] == t.targets[1]) {
        report(path, "DetachSelfContinuation", "detached block equals continuation");
        ok = false;
      }
    }
    return ok;
  }

  void check_region(const Region& r, bool loop_body, int scope, const Bits& assigned_in,
                    const std::string& prefix, bool top_level) {
    if (r.blocks.empty()) {
      report(prefix, "EmptyRegion", "region has no blocks");
      return;
    }
    if (!check_structure(r, loop_body, prefix)) return;
    const std::size_t n = r.blocks.size();

    // Parallel contexts: -1 is the region's own context, k >= 0 is the
    // detached sub-CFG of the k-th detach encountered.
    std::vector<int> ctx(n, -2);
    std::vector<int> ctx_cont;   // continuation block per detach context
    std::vector<int> ctx_scope;  // scope id per detach context
    std::vector<int> ctx_parent;
    auto scope_of = [&](int c) { return c < 0 ? scope : ctx_scope[static_cast<std::size_t>(c)]; };
    std::deque<std::size_t> work{0};
    ctx[0] = -1;
    auto visit = [&](std::size_t from, int target, int c) {
      auto& slot = ctx[static_cast<std::size_t>(target)];
      if (slot == -2) {
        slot = c;
        work.push_back(static_cast<std::size_t>(target));
      } else if (slot != c) {
        report(block_path(prefix, from), "SharedBlock",
               "^bb" + std::to_string(target) + " reached from two parallel contexts");
      }
    };
    while (!work.empty()) {
      const std::size_t b = work.front();
      work.pop_front();
      const int c = ctx[b];
      const Instr& t = r.blocks[b].instrs.back();
      const std::string path = block_path(prefix, b);
      switch (t.op) {
        case Op::Br:
        case Op::CBr:
          for (int target : t.targets) visit(b, target, c);
          break;
        case Op::Detach: {
          const int d = static_cast<int>(ctx_cont.size());
          ctx_cont.push_back(t.targets[1]);
          ctx_scope.push_back(new_scope(scope_of(c)));
          ctx_parent.push_back(c);
          visit(b, t.targets[0], d);
          visit(b, t.targets[1], c);
          break;
        }
        case Op::Reattach:
          if (c < 0) {
            report(path, "ReattachOutsideDetach", "reattach outside a detached region");
          } else if (t.targets[0] != ctx_cont[static_cast<std::size_t>(c)]) {
            report(path, "ReattachMismatch", "reattach must target the detach's continuation ^bb" +
                                                 std::to_string(ctx_cont[static_cast<std::size_t>(c)]));
          }
          break;
        case Op::Ret:
        case Op::Yield:
          if (c >= 0) report(path, "DetachMustReattach", "detached region must reattach");
          break;
        default:
          break;
      }
    }
    for (std::size_t d = 0; d < ctx_cont.size(); ++d) {
      // The continuation belongs to the detaching context; a detached
      // sub-CFG that reaches it by branching would run it twice.
      const auto cont = static_cast<std::size_t>(ctx_cont[d]);
      if (ctx[cont] != ctx_parent[d]) {
        report(block_path(prefix, cont), "DetachMustReattach", "detached region must reattach");
      }
    }

    // Pending-sync dataflow: may a detach be outstanding at block entry?
    std::vector<int> pending(n, -1);  // -1 unvisited, 0/1
    std::deque<std::size_t> pw{0};
    pending[0] = 0;
    auto flow = [&](int target, int value) {
      auto& p = pending[static_cast<std::size_t>(target)];
      if (p < value) {
        p = value;
        pw.push_back(static_cast<std::size_t>(target));
      }
    };
    std::vector<bool> missing_sync(n, false);
    while (!pw.empty()) {
      const std::size_t b = pw.front();
      pw.pop_front();
      int p = pending[b];
      for (const Instr& in : r.blocks[b].instrs) {
        switch (in.op) {
          case Op::Sync: p = 0; break;
          case Op::Br:
          case Op::CBr:
            for (int target : in.targets) flow(target, p);
            break;
          case Op::Detach:
            if (pending[static_cast<std::size_t>(in.targets[0])] < 0) {
              pending[static_cast<std::size_t>(in.targets[0])] = 0;
              pw.push_back(static_cast<std::size_t>(in.targets[0]));
            }
            flow(in.targets[1], 1);
            break;
          case Op::Ret:
          case Op::Yield:
          case Op::Reattach:
            if (p) missing_sync[b] = true;
            break;
          default:
            break;
        }
      }
    }
    for (std::size_t b = 0; b < n; ++b) {
      if (missing_sync[b]) {
        report(block_path(prefix, b), "MissingSync",
               "missing sync before " + std::string(to_string(r.blocks[b].instrs.back().op)));
      }
    }

    // Definite assignment: intersection over predecessors.
    std::vector<Bits> in_sets(n, Bits(fn_.regs.size(), true));
    std::vector<bool> reached(n, false);
    in_sets[0] = assigned_in;
    reached[0] = true;
    std::deque<std::size_t> aw{0};
    auto transfer = [&](std::size_t b) {
      Bits s = in_sets[b];
      for (const Instr& in : r.blocks[b].instrs) {
        if (!in.is_loop() && valid_reg(in.dst)) s.set(in.dst);
      }
      return s;
    };
    while (!aw.empty()) {
      const std::size_t b = aw.front();
      aw.pop_front();
      const Bits out = transfer(b);
      const Instr& t = r.blocks[b].instrs.back();
      if (t.op == Op::Reattach) continue;
      for (int target : t.targets) {
        const auto tb = static_cast<std::size_t>(target);
        bool changed = false;
        if (!reached[tb]) {
          reached[tb] = true;
          in_sets[tb] = out;
          changed = true;
        } else {
          changed = in_sets[tb].intersect(out);
        }
        if (changed) aw.push_back(tb);
      }
    }

    // Per-instruction checks with the converged sets.
    for (std::size_t b = 0; b < n; ++b) {
      if (ctx[b] == -2) continue;  // unreachable
      Bits s = in_sets[b];
      const int sc = scope_of(ctx[b]);
      const std::string path = block_path(prefix, b);
      const bool base_ctx = ctx[b] == -1;
      for (std::size_t i = 0; i < r.blocks[b].instrs.size(); ++i) {
        const Instr& in = r.blocks[b].instrs[i];
        check_instr(in, s, sc, path, top_level && base_ctx, i);
        if (!in.is_loop() && valid_reg(in.dst)) s.set(in.dst);
      }
    }
  }

  void use(const Operand& o, const Bits& assigned, int scope, const std::string& path,
           ValueKind want, const Instr& in) {
    const std::string op(to_string(in.op));
    if (o.kind == Operand::Kind::Reg) {
      if (!valid_reg(o.reg)) {
        report(path, "UndefinedRegister", op + " uses an invalid register");
        return;
      }
      if (!assigned.test(o.reg)) {
        report(path, "UseBeforeDef", op + " reads " + name(o.reg) + " before it is assigned");
      }
      if (fn_.type_of(o.reg).kind != want) {
        report(path, "TypeMismatch", op + " operand " + name(o.reg) + " has type " + fn_.type_of(o.reg).to_string());
      }
      uses_.emplace_back(o.reg, scope, path);
      return;
    }
    const bool ok = (want == ValueKind::F32 && o.kind == Operand::Kind::Float) ||
                    (want == ValueKind::I64 && o.kind == Operand::Kind::Int);
    if (!ok) report(path, "TypeMismatch", op + " immediate has the wrong type");
  }

  void define(int reg, int scope, const std::string& path, ValueKind want, const Instr& in) {
    const std::string op(to_string(in.op));
    if (!valid_reg(reg)) {
      report(path, "UndefinedRegister", op + " defines an invalid register");
      return;
    }
    if (fn_.is_param(reg)) report(path, "ParamReadOnly", "parameter " + name(reg) + " is read-only");
    if (iv_owner_[static_cast<std::size_t>(reg)] && !in.is_loop()) {
      report(path, "InductionVarReadOnly", "induction variable " + name(reg) + " is read-only");
    }
    if (fn_.type_of(reg).kind != want) {
      report(path, "TypeMismatch", op + " result " + name(reg) + " has type " + fn_.type_of(reg).to_string());
    }
    int& ds = def_scope_[static_cast<std::size_t>(reg)];
    if (ds < 0) {
      ds = scope;
    } else if (ds != scope) {
      report(path, "MultiScopeDef", name(reg) + " is assigned in more than one parallel scope");
    }
  }

  void check_instr(const Instr& in, const Bits& assigned, int scope, const std::string& path,
                   bool top_level, std::size_t index) {
    const std::string op(to_string(in.op));
    auto arity = [&](std::size_t n) {
      if (in.args.size() != n) {
        report(path, "Arity", op + " takes " + std::to_string(n) + " operands");
        return false;
      }
      return true;
    };
    if (is_float_arith(in.op) || is_index_arith(in.op)) {
      const ValueKind k = is_float_arith(in.op) ? ValueKind::F32 : ValueKind::I64;
      if (!arity(static_cast<std::size_t>(arith_arity(in.op)))) return;
      for (const Operand& o : in.args) use(o, assigned, scope, path, k, in);
      define(in.dst, scope, path, k, in);
      return;
    }
    switch (in.op) {
      case Op::IToF:
        if (!arity(1)) return;
        use(in.args[0], assigned, scope, path, ValueKind::I64, in);
        define(in.dst, scope, path, ValueKind::F32, in);
        return;
      case Op::Load:
      case Op::Store: {
        if (!arity(in.op == Op::Load ? 2 : 3)) return;
        if (!in.args[0].is_reg() || !valid_reg(in.args[0].reg)) {
          report(path, "TypeMismatch", op + " needs a buffer register");
          return;
        }
        use(in.args[0], assigned, scope, path, ValueKind::Buf, in);
        use(in.args[1], assigned, scope, path, ValueKind::I64, in);
        if (in.op == Op::Load) {
          define(in.dst, scope, path, ValueKind::F32, in);
        } else {
          use(in.args[2], assigned, scope, path, ValueKind::F32, in);
          if (access_[static_cast<std::size_t>(in.args[0].reg)] != Access::Writable) {
            report(path, "StoreToReadOnly", "store to read-only buffer " + name(in.args[0].reg));
          }
          if (in.args[1].kind == Operand::Kind::Int) check_static_index(in, path);
        }
        if (in.op == Op::Load && in.args[1].kind == Operand::Kind::Int) check_static_index(in, path);
        return;
      }
      case Op::Alloc:
      case Op::ConstBuf: {
        if (!top_level) report(path, "AllocNotTopLevel", op + " outside the function's top level");
        if (!in.args.empty()) report(path, "Arity", op + " takes no operands");
        define(in.dst, scope, path, ValueKind::Buf, in);
        if (!valid_reg(in.dst)) return;
        const ValueType& t = fn_.type_of(in.dst);
        for (auto d : t.shape) {
          if (d < 1) report(path, "BadExtent", op + " extent must be positive");
        }
        if (in.op == Op::ConstBuf && static_cast<std::int64_t>(in.payload.size()) != t.extent()) {
          report(path, "BadPayload", "constbuf payload size differs from extent");
        }
        if (buffer_defs_[in.dst]++ > 0) report(path, "BufferRedefined", name(in.dst) + " defined twice");
        if (in.op == Op::Alloc) access_[static_cast<std::size_t>(in.dst)] = Access::Writable;
        return;
      }
      case Op::Call:
        check_call(in, assigned, scope, path);
        return;
      case Op::CBr:
        if (arity(1)) use(in.args[0], assigned, scope, path, ValueKind::I64, in);
        return;
      case Op::Br:
      case Op::Ret:
      case Op::Yield:
      case Op::Detach:
      case Op::Reattach:
      case Op::Sync:
        arity(0);
        return;
      case Op::PFor:
      case Op::For:
        check_loop(in, assigned, scope, path, index);
        return;
      default:
        report(path, "UnknownOp", "unknown instruction");
    }
  }

  void check_static_index(const Instr& in, const std::string& path) {
    const auto extent = fn_.type_of(in.args[0].reg).extent();
    if (in.args[1].i < 0 || in.args[1].i >= extent) {
      report(path, "OutOfBounds", std::string(to_string(in.op)) + " index " + std::to_string(in.args[1].i) +
                                      " outside extent " + std::to_string(extent));
    }
  }

  void check_call(const Instr& in, const Bits& assigned, int scope, const std::string& path) {
    auto it = module_.functions.find(in.callee);
    if (it == module_.functions.end()) {
      report(path, "UnresolvedCall", "call to unknown @" + in.callee);
      return;
    }
    const FjFunction& callee = it->second;
    if (callee.params.size() != in.args.size()) {
      report(path, "CallArity", "@" + in.callee + " takes " + std::to_string(callee.params.size()) + " arguments");
      return;
    }
    for (std::size_t a = 0; a < in.args.size(); ++a) {
      const ValueType& want = callee.type_of(callee.params[a].reg);
      const Operand& arg = in.args[a];
      use(arg, assigned, scope, path, want.kind, in);
      if (!want.is_buf() || !arg.is_reg() || !valid_reg(arg.reg)) continue;
      const ValueType& have = fn_.type_of(arg.reg);
      if (have.is_buf() && have.extent() != want.extent()) {
        report(path, "TypeMismatch", "argument " + std::to_string(a) + " of @" + in.callee + " has extent " +
                                         std::to_string(have.extent()) + ", expected " +
                                         std::to_string(want.extent()));
      }
      if (callee.params[a].out) {
        if (access_[static_cast<std::size_t>(arg.reg)] != Access::Writable) {
          report(path, "StoreToReadOnly", "read-only " + name(arg.reg) + " passed as out argument");
        }
        for (std::size_t other = 0; other < in.args.size(); ++other) {
          if (other != a && in.args[other] == arg) {
            report(path, "AliasedOut", name(arg.reg) + " passed as out argument and again");
          }
        }
      }
    }
  }

  void check_loop(const Instr& in, const Bits& assigned, int scope, const std::string& path,
                  std::size_t index) {
    const std::string op(to_string(in.op));
    if (in.args.size() != 2 || in.body.size() != 1) {
      report(path, "Arity", op + " needs bounds and one body region");
      return;
    }
    use(in.args[0], assigned, scope, path, ValueKind::I64, in);
    use(in.args[1], assigned, scope, path, ValueKind::I64, in);
    if (in.grain < 0 || (in.op == Op::For && in.grain != 0)) report(path, "BadGrain", "invalid grain");
    if (in.strip && (in.op != Op::PFor || in.strip->grain < 1 || in.strip->trip < 0)) {
      report(path, "BadStrip", "invalid strip annotation");
    }
    if (!valid_reg(in.dst)) {
      report(path, "UndefinedRegister", op + " needs an induction variable");
      return;
    }
    auto& owner = iv_owner_[static_cast<std::size_t>(in.dst)];
    if (owner++ > 0) report(path, "InductionVarReadOnly", name(in.dst) + " is the induction variable of two loops");
    if (assigned.test(in.dst) || fn_.is_param(in.dst)) {
      report(path, "InductionVarReadOnly", name(in.dst) + " is assigned outside its loop");
    }
    const int body_scope = in.op == Op::PFor ? new_scope(scope) : scope;
    define(in.dst, body_scope, path, ValueKind::I64, in);
    Bits inner = assigned;
    inner.set(in.dst);
    check_region(in.region(), true, body_scope, inner,
                 path + "/" + op + "@" + std::to_string(index) + "/", false);
  }

  const FjModule& module_;
  const FjFunction& fn_;
  std::vector<FjDiagnostic>& out_;
  std::vector<int> def_scope_;
  std::vector<Access> access_;
  std::vector<int> iv_owner_;
  std::vector<int> scope_parent_;
  std::map<int, int> buffer_defs_;
  std::vector<std::tuple<int, int, std::string>> uses_;
};

}  // namespace

std::vector<FjDiagnostic> verify(const FjModule& module) {
  std::vector<FjDiagnostic> out;
  if (!module.entry.empty() && !module.contains(module.entry)) {
    out.push_back(FjDiagnostic{module.entry, "", "UnresolvedEntry", "entry function @" + module.entry + " missing"});
  }
  for (const auto& [name, fn] : module.functions) {
    if (fn.name != name) {
      out.push_back(FjDiagnostic{name, "", "NameMismatch", "function stored under another name"});
    }
    if (fn.declared) {
      if (!fn.body.blocks.empty()) {
        out.push_back(FjDiagnostic{name, "", "DeclarationHasBody", "declared function has a body"});
      }
      if (!fn.opaque) out.push_back(FjDiagnostic{name, "", "DeclarationNotOpaque", "external declarations must be opaque"});
      continue;
    }
    FunctionVerifier(module, fn, out).run();
  }
  return out;
}

void verify_or_throw(const FjModule& module) {
  const auto diags = verify(module);
  if (diags.empty()) return;
  std::ostringstream os;
  os << diags.size() << " diagnostic(s)";
  for (const auto& d : diags) os << "\n  @" << d.function << " " << d.block << ": " << d.rule << ": " << d.message;
  throw Error(ErrorKind::VerifyError, os.str());
}

}  // namespace fjc::ir
