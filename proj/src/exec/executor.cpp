#include "fjc/exec/executor.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cstring>
#include <map>
#include <set>

#include "fjc/scalar_ops.hpp"

namespace fjc::exec {

namespace {

union Slot {
  std::int64_t i;
  float f;
  float* p;
};
static_assert(sizeof(Slot) == 8);

enum class Bc : std::uint8_t {
  FAdd, FSub, FMul, FDiv, FMax, FNeg, FExp, FTanh, FSig, FFma, Mov,
  IAdd, ISub, IMul, IDiv, IRem, IMin, IMax, ILt, IEq, IToF,
  Ld, St, LdChk, StChk, Alloc, ConstBuf,
  Jmp, CBr, Ret, Halt, Reattach, Detach, Sync, Call,
  ForEnter, Next, PFor,
  Dot4,      // Ld, Ld, FMul, FAdd executed as one dispatch
  IAddNext,  // IAdd followed by Next
};

// Field use per opcode:
//   arith      a=dst b=lhs c=rhs (d=addend for FFma)
//   Ld/LdChk   a=dst b=buf c=idx (d=extent e=debug)
//   St/StChk   a=buf b=idx c=val (d=extent e=debug)
//   Alloc      a=dst b=extent;  ConstBuf a=dst b=constant index
//   Jmp a=target; CBr a=cond b=true c=false; Detach a=body b=cont; Reattach a=cont
//   Call       a=callee b=args offset c=arg count
//   ForEnter   a=iv b=lo c=hi d=end e=exit
//   Next       a=iv b=end c=body d=exit
//   PFor       a=iv b=lo c=hi d=end e=segment f=grain
struct Ins {
  Bc op = Bc::Halt;
  std::int32_t a = 0, b = 0, c = 0, d = 0, e = 0, f = 0;
};

struct Func {
  std::string name;
  std::vector<Ins> code;
  std::vector<Slot> frame;  // template: zeroed registers plus constants
  std::vector<std::int32_t> params;
};

}  // namespace

struct Program {
  std::vector<Func> funcs;
  std::vector<std::int32_t> call_args;
  std::vector<std::vector<float>> constants;
  std::vector<std::string> debug;
  int entry = -1;
};

namespace {

// ---------------------------------------------------------------------------
// Compilation

Bc arith_bc(ir::Op op) {
  using ir::Op;
  switch (op) {
    case Op::FAdd: return Bc::FAdd;
    case Op::FSub: return Bc::FSub;
    case Op::FMul: return Bc::FMul;
    case Op::FDiv: return Bc::FDiv;
    case Op::FMax: return Bc::FMax;
    case Op::FNeg: return Bc::FNeg;
    case Op::FExp: return Bc::FExp;
    case Op::FTanh: return Bc::FTanh;
    case Op::FSigmoid: return Bc::FSig;
    case Op::FFma: return Bc::FFma;
    case Op::FMov:
    case Op::IMov: return Bc::Mov;
    case Op::IAdd: return Bc::IAdd;
    case Op::ISub: return Bc::ISub;
    case Op::IMul: return Bc::IMul;
    case Op::IDiv: return Bc::IDiv;
    case Op::IRem: return Bc::IRem;
    case Op::IMin: return Bc::IMin;
    case Op::IMax: return Bc::IMax;
    case Op::ILt: return Bc::ILt;
    case Op::IEq: return Bc::IEq;
    case Op::IToF: return Bc::IToF;
    default: return Bc::Halt;
  }
}

class FuncCompiler {
 public:
  FuncCompiler(const ir::FjFunction& fn, Func& out, Program& prog,
               const std::map<std::string, int>& index, bool checked)
      : fn_(fn), out_(out), prog_(prog), index_(index), checked_(checked) {}

  void compile() {
    out_.name = fn_.name;
    out_.frame.assign(fn_.regs.size(), Slot{0});
    for (const auto& p : fn_.params) out_.params.push_back(p.reg);
    compile_region(fn_.body, nullptr);
    while (!segments_.empty()) {
      Segment s = segments_.front();
      segments_.erase(segments_.begin());
      code()[static_cast<std::size_t>(s.pfor_at)].e = pc();
      Loop loop{s.iv, s.end, pc(), {}};
      compile_region(*s.body, &loop);
      const std::int32_t halt = emit(Ins{Bc::Halt});
      for (auto at : loop.exits) code()[static_cast<std::size_t>(at)].d = halt;
    }
    fuse();
  }

 private:
  struct Loop {
    std::int32_t iv, end, body;
    std::vector<std::int32_t> exits;  // Next instructions awaiting the exit pc
  };
  struct Segment {
    const ir::Region* body;
    std::int32_t iv, end, pfor_at;
  };

  std::vector<Ins>& code() { return out_.code; }
  std::int32_t pc() const { return static_cast<std::int32_t>(out_.code.size()); }
  std::int32_t emit(Ins in) {
    out_.code.push_back(in);
    return pc() - 1;
  }

  std::int32_t hidden_slot() {
    out_.frame.push_back(Slot{0});
    return static_cast<std::int32_t>(out_.frame.size()) - 1;
  }

  std::int32_t slot(const ir::Operand& o) {
    if (o.is_reg()) return o.reg;
    const bool is_float = o.kind == ir::Operand::Kind::Float;
    const std::uint64_t bits = is_float ? std::bit_cast<std::uint32_t>(o.f) : static_cast<std::uint64_t>(o.i);
    auto key = std::make_pair(is_float, bits);
    auto it = consts_.find(key);
    if (it != consts_.end()) return it->second;
    Slot s{0};
    if (is_float) {
      s.f = o.f;
    } else {
      s.i = o.i;
    }
    out_.frame.push_back(s);
    const auto at = static_cast<std::int32_t>(out_.frame.size()) - 1;
    consts_.emplace(key, at);
    return at;
  }

  std::int32_t extent_of(int buf_reg) const {
    return static_cast<std::int32_t>(fn_.type_of(buf_reg).extent());
  }

  std::int32_t debug(const ir::Instr& in) {
    std::string s = "@" + fn_.name + ": " + std::string(ir::to_string(in.op)) + " %" +
                    fn_.regs[static_cast<std::size_t>(in.args[0].reg)].name;
    prog_.debug.push_back(std::move(s));
    return static_cast<std::int32_t>(prog_.debug.size()) - 1;
  }

  void compile_region(const ir::Region& r, Loop* loop) {
    std::vector<std::int32_t> starts(r.blocks.size(), 0);
    struct Fix {
      std::int32_t at;
      int field;
      int block;
    };
    std::vector<Fix> fixes;
    for (std::size_t b = 0; b < r.blocks.size(); ++b) {
      starts[b] = pc();
      for (const ir::Instr& in : r.blocks[b].instrs) {
        using ir::Op;
        if (ir::is_float_arith(in.op) || ir::is_index_arith(in.op) || in.op == ir::Op::IToF) {
          Ins x{arith_bc(in.op)};
          x.a = in.dst;
          if (!in.args.empty()) x.b = slot(in.args[0]);
          if (in.args.size() > 1) x.c = slot(in.args[1]);
          if (in.args.size() > 2) x.d = slot(in.args[2]);
          emit(x);
          continue;
        }
        switch (in.op) {
          case Op::Load: {
            Ins x{checked_ ? Bc::LdChk : Bc::Ld, in.dst, slot(in.args[0]), slot(in.args[1])};
            if (checked_) {
              x.d = extent_of(in.args[0].reg);
              x.e = debug(in);
            }
            emit(x);
            break;
          }
          case Op::Store: {
            Ins x{checked_ ? Bc::StChk : Bc::St, slot(in.args[0]), slot(in.args[1]), slot(in.args[2])};
            if (checked_) {
              x.d = extent_of(in.args[0].reg);
              x.e = debug(in);
            }
            emit(x);
            break;
          }
          case Op::Alloc:
            emit(Ins{Bc::Alloc, in.dst, extent_of(in.dst)});
            break;
          case Op::ConstBuf:
            prog_.constants.push_back(in.payload);
            emit(Ins{Bc::ConstBuf, in.dst, static_cast<std::int32_t>(prog_.constants.size()) - 1});
            break;
          case Op::Call: {
            auto it = index_.find(in.callee);
            if (it == index_.end() || it->second < 0) {
              throw Error(ErrorKind::KernelMissing, "@" + in.callee + " has no body to execute");
            }
            Ins x{Bc::Call, it->second, static_cast<std::int32_t>(prog_.call_args.size()),
                  static_cast<std::int32_t>(in.args.size())};
            for (const auto& a : in.args) prog_.call_args.push_back(slot(a));
            emit(x);
            break;
          }
          case Op::Br:
            fixes.push_back({emit(Ins{Bc::Jmp}), 0, in.targets[0]});
            break;
          case Op::CBr: {
            const auto at = emit(Ins{Bc::CBr, slot(in.args[0])});
            fixes.push_back({at, 1, in.targets[0]});
            fixes.push_back({at, 2, in.targets[1]});
            break;
          }
          case Op::Ret:
            emit(Ins{Bc::Ret});
            break;
          case Op::Yield: {
            const auto at = emit(Ins{Bc::Next, loop->iv, loop->end, loop->body});
            loop->exits.push_back(at);
            break;
          }
          case Op::Detach: {
            const auto at = emit(Ins{Bc::Detach});
            fixes.push_back({at, 0, in.targets[0]});
            fixes.push_back({at, 1, in.targets[1]});
            break;
          }
          case Op::Reattach:
            fixes.push_back({emit(Ins{Bc::Reattach}), 0, in.targets[0]});
            break;
          case Op::Sync:
            emit(Ins{Bc::Sync});
            break;
          case Op::For: {
            const std::int32_t end = hidden_slot();
            const auto enter = emit(Ins{Bc::ForEnter, in.dst, slot(in.args[0]), slot(in.args[1]), end});
            Loop inner{in.dst, end, pc(), {}};
            compile_region(in.region(), &inner);
            code()[static_cast<std::size_t>(enter)].e = pc();
            for (auto at : inner.exits) code()[static_cast<std::size_t>(at)].d = pc();
            break;
          }
          case Op::PFor: {
            const std::int32_t end = hidden_slot();
            Ins x{Bc::PFor, in.dst, slot(in.args[0]), slot(in.args[1]), end};
            x.f = static_cast<std::int32_t>(in.grain);
            const auto at = emit(x);
            segments_.push_back(Segment{&in.region(), in.dst, end, at});
            break;
          }
          default:
            throw Error(ErrorKind::UnsupportedOp, "cannot execute " + std::string(ir::to_string(in.op)));
        }
      }
    }
    for (const Fix& fx : fixes) {
      Ins& x = code()[static_cast<std::size_t>(fx.at)];
      const std::int32_t target = starts[static_cast<std::size_t>(fx.block)];
      (fx.field == 0 ? x.a : fx.field == 1 ? x.b : x.c) = target;
    }
  }

  // Superinstructions over straight-line runs that no jump enters midway.
  void fuse() {
    std::set<std::int32_t> targets;
    for (const Ins& x : code()) {
      switch (x.op) {
        case Bc::Jmp: targets.insert(x.a); break;
        case Bc::CBr: targets.insert(x.b); targets.insert(x.c); break;
        case Bc::Detach: targets.insert(x.a); targets.insert(x.b); break;
        case Bc::Reattach: targets.insert(x.a); break;
        case Bc::ForEnter: targets.insert(x.e); break;
        case Bc::Next: targets.insert(x.c); targets.insert(x.d); break;
        case Bc::PFor: targets.insert(x.e); break;
        default: break;
      }
    }
    auto free_of_targets = [&](std::size_t from, std::size_t to) {
      for (std::size_t k = from; k < to; ++k) {
        if (targets.count(static_cast<std::int32_t>(k))) return false;
      }
      return true;
    };
    auto& c = code();
    for (std::size_t i = 0; i + 1 < c.size(); ++i) {
      if (i + 3 < c.size() && c[i].op == Bc::Ld && c[i + 1].op == Bc::Ld && c[i + 2].op == Bc::FMul &&
          c[i + 3].op == Bc::FAdd && free_of_targets(i + 1, i + 4)) {
        c[i].op = Bc::Dot4;
        i += 3;
        continue;
      }
      if (c[i].op == Bc::IAdd && c[i + 1].op == Bc::Next && free_of_targets(i + 1, i + 2)) {
        c[i].op = Bc::IAddNext;
        ++i;
      }
    }
  }

  const ir::FjFunction& fn_;
  Func& out_;
  Program& prog_;
  const std::map<std::string, int>& index_;
  bool checked_;
  std::map<std::pair<bool, std::uint64_t>, std::int32_t> consts_;
  std::vector<Segment> segments_;
};

// ---------------------------------------------------------------------------
// Execution

struct RunState {
  const Program* prog;
  runtime::TaskPool* pool;
  std::atomic<std::int64_t> max_depth{0};
};

struct Activation {
  std::vector<std::unique_ptr<float[]>> allocs;
};

struct Ctx {
  RunState* run;
  const Func* fn;
  Activation* act;
  runtime::SyncRegion* region;
  std::int64_t depth;
};

// Waits for stragglers when unwinding so no task outlives the frames it reads.
struct RegionScope {
  runtime::TaskPool* pool;
  runtime::SyncRegion region;

  explicit RegionScope(runtime::TaskPool* p) : pool(p) {}
  ~RegionScope() {
    if (pool && region.pending() > 0) {
      try {
        pool->sync(region);
      } catch (...) {
      }
    }
  }
};

std::unique_ptr<Slot[]> copy_frame(const Func& fn, const Slot* from) {
  std::unique_ptr<Slot[]> f(new Slot[fn.frame.size()]);
  std::memcpy(f.get(), from, fn.frame.size() * sizeof(Slot));
  return f;
}

[[noreturn]] void out_of_bounds(const Program& prog, const Ins& in, std::int64_t index) {
  throw Error(ErrorKind::OutOfBounds, prog.debug[static_cast<std::size_t>(in.e)] + "[" + std::to_string(index) +
                                          "] outside [0, " + std::to_string(in.d) + ")");
}

void note_depth(RunState& run, std::int64_t depth) {
  std::int64_t seen = run.max_depth.load(std::memory_order_relaxed);
  while (depth > seen && !run.max_depth.compare_exchange_weak(seen, depth, std::memory_order_relaxed)) {
  }
}

void interp(const Ctx& ctx, Slot* f, std::int32_t start);

struct DetachedTask {
  Ctx parent;
  std::unique_ptr<Slot[]> frame;
  std::int32_t pc;
};

void run_detached(void* p, std::int64_t, std::int64_t) {
  std::unique_ptr<DetachedTask> task(static_cast<DetachedTask*>(p));
  RegionScope scope(task->parent.run->pool);
  Ctx ctx = task->parent;
  ctx.region = &scope.region;
  interp(ctx, task->frame.get(), task->pc);
  scope.pool->sync(scope.region);
}

struct PforLeaf {
  const Ctx* ctx;
  const Slot* frame;
  const Ins* in;
};

void run_leaf(const PforLeaf& leaf, std::int64_t lo, std::int64_t hi) {
  const Func& fn = *leaf.ctx->fn;
  auto frame = copy_frame(fn, leaf.frame);
  frame[leaf.in->a].i = lo;
  frame[leaf.in->d].i = hi;
  RegionScope scope(leaf.ctx->run->pool);
  Ctx ctx = *leaf.ctx;
  ctx.region = &scope.region;
  interp(ctx, frame.get(), leaf.in->e);
  scope.pool->sync(scope.region);
}

void call(const Ctx& ctx, const Slot* f, const Ins& in) {
  const Program& prog = *ctx.run->prog;
  const Func& callee = prog.funcs[static_cast<std::size_t>(in.a)];
  auto frame = copy_frame(callee, callee.frame.data());
  for (std::int32_t k = 0; k < in.c; ++k) {
    frame[callee.params[static_cast<std::size_t>(k)]] = f[prog.call_args[static_cast<std::size_t>(in.b + k)]];
  }
  Activation act;
  RegionScope scope(ctx.run->pool);
  Ctx inner{ctx.run, &callee, &act, &scope.region, ctx.depth + 1};
  note_depth(*ctx.run, inner.depth);
  interp(inner, frame.get(), 0);
}

void interp(const Ctx& ctx, Slot* f, std::int32_t start) {
  const Ins* code = ctx.fn->code.data();
  const Ins* ip = code + start;
  runtime::TaskPool* pool = ctx.run->pool;
  for (;;) {
    const Ins& in = *ip;
    switch (in.op) {
      case Bc::FAdd: f[in.a].f = scalar::add(f[in.b].f, f[in.c].f); ++ip; break;
      case Bc::FSub: f[in.a].f = scalar::sub(f[in.b].f, f[in.c].f); ++ip; break;
      case Bc::FMul: f[in.a].f = scalar::mul(f[in.b].f, f[in.c].f); ++ip; break;
      case Bc::FDiv: f[in.a].f = scalar::div(f[in.b].f, f[in.c].f); ++ip; break;
      case Bc::FMax: f[in.a].f = scalar::max(f[in.b].f, f[in.c].f); ++ip; break;
      case Bc::FNeg: f[in.a].f = scalar::neg(f[in.b].f); ++ip; break;
      case Bc::FExp: f[in.a].f = scalar::exp(f[in.b].f); ++ip; break;
      case Bc::FTanh: f[in.a].f = scalar::tanh(f[in.b].f); ++ip; break;
      case Bc::FSig: f[in.a].f = scalar::sigmoid(f[in.b].f); ++ip; break;
      case Bc::FFma: f[in.a].f = scalar::fma(f[in.b].f, f[in.c].f, f[in.d].f); ++ip; break;
      case Bc::Mov: f[in.a] = f[in.b]; ++ip; break;
      case Bc::IAdd: f[in.a].i = scalar::iadd(f[in.b].i, f[in.c].i); ++ip; break;
      case Bc::ISub: f[in.a].i = scalar::isub(f[in.b].i, f[in.c].i); ++ip; break;
      case Bc::IMul: f[in.a].i = scalar::imul(f[in.b].i, f[in.c].i); ++ip; break;
      case Bc::IDiv: f[in.a].i = scalar::idiv(f[in.b].i, f[in.c].i); ++ip; break;
      case Bc::IRem: f[in.a].i = scalar::irem(f[in.b].i, f[in.c].i); ++ip; break;
      case Bc::IMin: f[in.a].i = scalar::imin(f[in.b].i, f[in.c].i); ++ip; break;
      case Bc::IMax: f[in.a].i = scalar::imax(f[in.b].i, f[in.c].i); ++ip; break;
      case Bc::ILt: f[in.a].i = scalar::ilt(f[in.b].i, f[in.c].i); ++ip; break;
      case Bc::IEq: f[in.a].i = scalar::ieq(f[in.b].i, f[in.c].i); ++ip; break;
      case Bc::IToF: f[in.a].f = static_cast<float>(f[in.b].i); ++ip; break;
      case Bc::Ld: f[in.a].f = f[in.b].p[f[in.c].i]; ++ip; break;
      case Bc::St: f[in.a].p[f[in.b].i] = f[in.c].f; ++ip; break;
      case Bc::LdChk: {
        const std::int64_t i = f[in.c].i;
        if (i < 0 || i >= in.d) out_of_bounds(*ctx.run->prog, in, i);
        f[in.a].f = f[in.b].p[i];
        ++ip;
        break;
      }
      case Bc::StChk: {
        const std::int64_t i = f[in.b].i;
        if (i < 0 || i >= in.d) out_of_bounds(*ctx.run->prog, in, i);
        f[in.a].p[i] = f[in.c].f;
        ++ip;
        break;
      }
      case Bc::Dot4:
        f[ip[0].a].f = f[ip[0].b].p[f[ip[0].c].i];
        f[ip[1].a].f = f[ip[1].b].p[f[ip[1].c].i];
        f[ip[2].a].f = scalar::mul(f[ip[2].b].f, f[ip[2].c].f);
        f[ip[3].a].f = scalar::add(f[ip[3].b].f, f[ip[3].c].f);
        ip += 4;
        break;
      case Bc::IAddNext: {
        f[in.a].i = scalar::iadd(f[in.b].i, f[in.c].i);
        const Ins& n = ip[1];
        ip = ++f[n.a].i < f[n.b].i ? code + n.c : code + n.d;
        break;
      }
      case Bc::Next:
        ip = ++f[in.a].i < f[in.b].i ? code + in.c : code + in.d;
        break;
      case Bc::ForEnter: {
        const std::int64_t lo = f[in.b].i;
        const std::int64_t hi = f[in.c].i;
        f[in.a].i = lo;
        f[in.d].i = hi;
        ip = lo < hi ? ip + 1 : code + in.e;
        break;
      }
      case Bc::PFor: {
        const std::int64_t lo = f[in.b].i;
        const std::int64_t hi = f[in.c].i;
        if (lo < hi) {
          if (!pool) {
            f[in.a].i = lo;
            f[in.d].i = hi;
            interp(ctx, f, in.e);
          } else {
            std::int64_t grain = in.f;
            if (grain <= 0) {
              const std::int64_t p8 = 8 * static_cast<std::int64_t>(pool->workers());
              grain = std::clamp<std::int64_t>((hi - lo + p8 - 1) / p8, 1, 2048);
            }
            PforLeaf leaf{&ctx, f, &in};
            pool->parallel_for(lo, hi, grain, [&leaf](std::int64_t a, std::int64_t b) { run_leaf(leaf, a, b); });
          }
        }
        ++ip;
        break;
      }
      case Bc::Alloc: {
        auto buf = std::make_unique<float[]>(static_cast<std::size_t>(in.b));
        f[in.a].p = buf.get();
        ctx.act->allocs.push_back(std::move(buf));
        ++ip;
        break;
      }
      case Bc::ConstBuf:
        f[in.a].p = const_cast<float*>(ctx.run->prog->constants[static_cast<std::size_t>(in.b)].data());
        ++ip;
        break;
      case Bc::Jmp: ip = code + in.a; break;
      case Bc::CBr: ip = code + (f[in.a].i != 0 ? in.b : in.c); break;
      case Bc::Detach:
        if (!pool) {
          ip = code + in.a;
        } else {
          auto* task = new DetachedTask{ctx, copy_frame(*ctx.fn, f), in.a};
          runtime::Task t;
          t.fn = run_detached;
          t.ctx = task;
          pool->spawn(*ctx.region, t);
          ip = code + in.b;
        }
        break;
      case Bc::Reattach:
        if (pool) return;
        ip = code + in.a;
        break;
      case Bc::Sync:
        if (pool) pool->sync(*ctx.region);
        ++ip;
        break;
      case Bc::Call:
        call(ctx, f, in);
        ++ip;
        break;
      case Bc::Ret:
      case Bc::Halt:
        return;
    }
  }
}

graph::TensorType tensor_type(const ir::ValueType& t) {
  switch (t.kind) {
    case ir::ValueKind::F32: return graph::TensorType{graph::DType::F32, {}};
    case ir::ValueKind::I64: return graph::TensorType{graph::DType::I32, {}};
    case ir::ValueKind::Buf: break;
  }
  return graph::TensorType{graph::DType::F32, t.shape};
}

}  // namespace

Executable::Executable(const ir::FjModule& module, ExecOptions options)
    : program_(std::make_unique<Program>()), options_(options) {
  ir::verify_or_throw(module);
  if (!module.contains(module.entry)) throw Error(ErrorKind::VerifyError, "module has no entry function");
  std::map<std::string, int> index;
  int next = 0;
  for (const auto& [name, fn] : module.functions) index[name] = fn.declared ? -1 : next++;
  if (index.at(module.entry) < 0) {
    throw Error(ErrorKind::KernelMissing, "entry @" + module.entry + " has no body");
  }
  program_->funcs.resize(static_cast<std::size_t>(next));
  for (const auto& [name, fn] : module.functions) {
    if (fn.declared) continue;
    FuncCompiler(fn, program_->funcs[static_cast<std::size_t>(index[name])], *program_, index, options.checked)
        .compile();
  }
  program_->entry = index.at(module.entry);
  entry_ = module.function(module.entry);
}

Executable::~Executable() = default;
Executable::Executable(Executable&&) noexcept = default;
Executable& Executable::operator=(Executable&&) noexcept = default;

const ir::FjFunction& Executable::entry() const { return entry_; }

std::vector<graph::TensorType> Executable::input_types() const {
  std::vector<graph::TensorType> out;
  for (const auto& p : entry_.params) {
    if (!p.out) out.push_back(tensor_type(entry_.type_of(p.reg)));
  }
  return out;
}

std::vector<graph::TensorType> Executable::output_types() const {
  std::vector<graph::TensorType> out;
  for (const auto& p : entry_.params) {
    if (p.out) out.push_back(tensor_type(entry_.type_of(p.reg)));
  }
  return out;
}

std::size_t Executable::code_size() const {
  std::size_t n = 0;
  for (const auto& f : program_->funcs) n += f.code.size();
  return n;
}

ExecutionReport Executable::run(std::span<const TensorBuffer> inputs, runtime::TaskPool* pool) const {
  const Func& fn = program_->funcs[static_cast<std::size_t>(program_->entry)];
  const auto expected = input_types();
  if (inputs.size() != expected.size()) {
    throw Error(ErrorKind::InputMismatch, "expected " + std::to_string(expected.size()) + " inputs, got " +
                                              std::to_string(inputs.size()));
  }
  ExecutionReport report;
  auto frame = copy_frame(fn, fn.frame.data());
  std::size_t next_input = 0;
  for (const auto& p : entry_.params) {
    const ir::ValueType& t = entry_.type_of(p.reg);
    Slot& s = frame[p.reg];
    if (p.out) {
      report.outputs.push_back(TensorBuffer::zeros(tensor_type(t)));
      s.p = report.outputs.back().f32.data();
      continue;
    }
    const std::size_t k = next_input++;
    const TensorBuffer& in = inputs[k];
    const graph::TensorType want = tensor_type(t);
    const bool same = in.dtype == want.dtype &&
                      (in.shape == want.shape || (in.shape.empty() && want.element_count() == 1)) &&
                      in.consistent();
    if (!same) {
      throw Error(ErrorKind::InputMismatch, "parameter " + std::to_string(k) + " (%" +
                                                entry_.regs[static_cast<std::size_t>(p.reg)].name + ") expects " +
                                                want.to_string() + ", got " + in.type().to_string());
    }
    switch (t.kind) {
      case ir::ValueKind::Buf: s.p = const_cast<float*>(in.f32.data()); break;
      case ir::ValueKind::F32: s.f = in.f32[0]; break;
      case ir::ValueKind::I64: s.i = in.i32[0]; break;
    }
  }
  RunState state{program_.get(), pool, {1}};
  if (pool) pool->reset_counters();
  const auto t0 = std::chrono::steady_clock::now();
  auto body = [&] {
    Activation act;
    RegionScope scope(pool);
    Ctx ctx{&state, &fn, &act, &scope.region, 1};
    interp(ctx, frame.get(), 0);
  };
  if (pool) {
    pool->run(body);
  } else {
    body();
  }
  const auto t1 = std::chrono::steady_clock::now();

  report.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  report.mode = pool ? "parallel" : "serial";
  report.workers = pool ? pool->workers() : 1;
  report.checked = options_.checked;
  report.max_depth = state.max_depth.load();
  if (pool) {
    report.counters = pool->counters();
  } else {
    report.counters.roots = 1;
    report.counters.tasks_executed = {1};
  }
  return report;
}

ExecutionReport execute_fj(const ir::FjModule& module, std::span<const TensorBuffer> inputs,
                           runtime::TaskPool& pool, ExecOptions options) {
  return Executable(module, options).run(inputs, &pool);
}

ExecutionReport execute_serial(const ir::FjModule& module, std::span<const TensorBuffer> inputs,
                               ExecOptions options) {
  return Executable(ir::serial_elision(module), options).run(inputs, nullptr);
}

}  // namespace fjc::exec
