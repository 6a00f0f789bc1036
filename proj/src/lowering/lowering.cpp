#include "fjc/lowering/lowering.hpp"

#include <map>
#include <set>

namespace fjc::lowering {

using graph::DType;
using graph::HloGraph;
using graph::HloNode;
using graph::OpKind;
using ir::FunctionBuilder;
using ir::Op;
using ir::Operand;
using ir::ValueType;
using kernels::KernelSpec;

void LoweringConfig::validate() const {
  if (workers < 1) throw Error(ErrorKind::InvalidAttribute, "workers must be >= 1");
}

namespace {

using Shape = std::vector<std::int64_t>;
using LeafFn = std::function<void(Operand lin, const std::vector<Operand>& ivs)>;

std::int64_t elements(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

Shape strides_of(const Shape& shape) {
  Shape s(shape.size(), 1);
  for (std::size_t d = shape.size(); d-- > 1;) s[d - 1] = s[d] * shape[d];
  return s;
}

Op unary_op(OpKind kind) {
  switch (kind) {
    case OpKind::Neg: return Op::FNeg;
    case OpKind::Exp: return Op::FExp;
    case OpKind::Tanh: return Op::FTanh;
    case OpKind::Sigmoid: return Op::FSigmoid;
    default: break;
  }
  throw Error(ErrorKind::UnsupportedOp, "not a unary op: " + std::string(to_string(kind)));
}

Op binary_op(OpKind kind) {
  switch (kind) {
    case OpKind::Add: return Op::FAdd;
    case OpKind::Sub: return Op::FSub;
    case OpKind::Mul: return Op::FMul;
    case OpKind::Div: return Op::FDiv;
    case OpKind::Max: return Op::FMax;
    default: break;
  }
  throw Error(ErrorKind::UnsupportedOp, "not a binary op: " + std::string(to_string(kind)));
}

class Emitter {
 public:
  Emitter(FunctionBuilder& b, const LoweringConfig& config) : b_(b), config_(config) {}

  FunctionBuilder& builder() { return b_; }

  // Runs `leaf` once per element of `shape`. The linear index is built in
  // canonical form: lin0 = iv0, lin_d = lin_{d-1} * shape[d] + iv_d.
  void nest(const Shape& shape, const LeafFn& leaf) {
    if (shape.empty()) {
      leaf(Operand::imm(0), {});
      return;
    }
    if (config_.mode == Mode::ExposedLate) {
      std::vector<Operand> ivs;
      level(shape, 0, Operand::imm(0), ivs, leaf, false);
      return;
    }
    const std::int64_t n = shape[0];
    const std::int64_t p = config_.workers;
    std::int64_t lo = 0;
    for (std::int64_t c = 0; c < p; ++c) {
      const std::int64_t hi = lo + n / p + (c < n % p ? 1 : 0);
      b_.detach([&, lo, hi] {
        b_.for_(Operand::imm(lo), Operand::imm(hi), [&](int iv) {
          std::vector<Operand> ivs{Operand::r(iv)};
          inner(shape, 1, Operand::r(iv), ivs, leaf, true);
        });
      });
      lo = hi;
    }
    b_.sync();
  }

  // Linear offset of `idx` under `strides`.
  Operand offset(const std::vector<Operand>& idx, const Shape& strides) {
    Operand acc = Operand::imm(0);
    bool first = true;
    for (std::size_t d = 0; d < idx.size(); ++d) {
      if (strides[d] == 0) continue;
      Operand term = idx[d];
      if (strides[d] != 1) term = Operand::r(b_.arith(Op::IMul, {idx[d], Operand::imm(strides[d])}, "o"));
      acc = first ? term : Operand::r(b_.arith(Op::IAdd, {acc, term}, "o"));
      first = false;
    }
    return acc;
  }

  void copy(int src, int dst, const Shape& shape) {
    nest(shape, [&](Operand lin, const std::vector<Operand>&) {
      const int v = b_.load(src, lin);
      b_.store(dst, lin, Operand::r(v));
    });
  }

  void fill(int dst, const Shape& shape, float value) {
    nest(shape, [&](Operand lin, const std::vector<Operand>&) { b_.store(dst, lin, Operand::immf(value)); });
  }

 private:
  void level(const Shape& shape, std::size_t d, Operand prev, std::vector<Operand>& ivs, const LeafFn& leaf,
             bool serial) {
    auto body = [&](int iv) {
      ivs.push_back(Operand::r(iv));
      inner(shape, d + 1, d == 0 ? Operand::r(iv) : linear(prev, shape[d], iv), ivs, leaf, serial);
      ivs.pop_back();
    };
    if (serial) {
      b_.for_(Operand::imm(0), Operand::imm(shape[d]), body, "i");
    } else {
      b_.pfor(Operand::imm(0), Operand::imm(shape[d]), body, 0, "i");
    }
  }

  // Continues at dimension d with the linear index of the dimensions before it.
  void inner(const Shape& shape, std::size_t d, Operand lin, std::vector<Operand>& ivs, const LeafFn& leaf,
             bool serial) {
    if (d == shape.size()) {
      leaf(lin, ivs);
      return;
    }
    level(shape, d, lin, ivs, leaf, serial);
  }

  Operand linear(Operand prev, std::int64_t extent, int iv) {
    const int scaled = b_.arith(Op::IMul, {prev, Operand::imm(extent)}, "s");
    return Operand::r(b_.arith(Op::IAdd, {Operand::r(scaled), Operand::r(iv)}, "l"));
  }

  FunctionBuilder& b_;
  const LoweringConfig& config_;
};

kernels::Pipeline opaque_pipeline() {
  return [](const ir::FjModule& m) {
    opt::PipelineOptions options;
    options.config.grain_override = kOpaqueKernelGrain;
    options.mode = Mode::ExposedLate;
    return opt::run_fj_pipeline(m, options);
  };
}

class GraphLowering {
 public:
  GraphLowering(const HloGraph& graph, const LoweringConfig& config)
      : graph_(graph), config_(config), b_("main"), emit_(b_, config) {
    library_ = config.kernel_library ? config.kernel_library : std::make_shared<kernels::KernelLibrary>(true);
  }

  ir::FjModule run() {
    check_types();
    declare_params();
    const auto order = graph::topo_order(graph_);
    const auto live = live_nodes();
    std::map<int, std::size_t> first_output;
    for (std::size_t k = 0; k < graph_.outputs().size(); ++k) first_output.try_emplace(graph_.outputs()[k], k);

    // Storage: parameters and constants keep their own buffers; the first
    // output slot of a computed node is written in place.
    for (int id : order) {
      if (!live.count(id)) continue;
      const HloNode& node = graph_.node(id);
      if (node.kind == OpKind::Parameter) continue;
      const auto type = ValueType::buf(node.type.shape);
      if (node.kind == OpKind::Constant) {
        buf_[id] = b_.constbuf(type, node.attrs.f32_values, "c" + std::to_string(id));
      } else if (auto it = first_output.find(id); it != first_output.end()) {
        buf_[id] = outs_[it->second];
      } else {
        buf_[id] = b_.alloc(type, "t" + std::to_string(id));
      }
    }

    for (int id : order) {
      if (!live.count(id)) continue;
      const HloNode& node = graph_.node(id);
      if (node.kind != OpKind::Parameter && node.kind != OpKind::Constant) lower_node(node);
    }

    for (std::size_t k = 0; k < graph_.outputs().size(); ++k) {
      const int id = graph_.outputs()[k];
      if (buf_.at(id) != outs_[k]) emit_.copy(buf_.at(id), outs_[k], graph_.node(id).type.shape);
    }
    b_.ret();

    ir::FjModule m;
    m.entry = "main";
    m.add(std::move(b_).finish());
    for (auto& [name, fn] : extra_) m.add(std::move(fn));
    if (config_.mode == Mode::ExposedLate) m = link_kernels(m, *library_);
    ir::verify_or_throw(m);
    return m;
  }

 private:
  void check_types() const {
    for (const auto& [id, node] : graph_.nodes()) {
      if (node.type.dtype != DType::F32) {
        throw Error(ErrorKind::UnsupportedOp,
                    "node " + std::to_string(id) + ": i32 tensors cannot be lowered to FJ");
      }
    }
  }

  std::set<int> live_nodes() const {
    std::set<int> live;
    std::vector<int> work(graph_.outputs().begin(), graph_.outputs().end());
    while (!work.empty()) {
      const int id = work.back();
      work.pop_back();
      if (!live.insert(id).second) continue;
      for (int op : graph_.node(id).operands) work.push_back(op);
    }
    return live;
  }

  void declare_params() {
    for (std::size_t k = 0; k < graph_.parameters().size(); ++k) {
      const int id = graph_.parameters()[k];
      buf_[id] = b_.param("x" + std::to_string(k), ValueType::buf(graph_.node(id).type.shape));
    }
    for (std::size_t k = 0; k < graph_.outputs().size(); ++k) {
      const int id = graph_.outputs()[k];
      outs_.push_back(b_.param("out" + std::to_string(k), ValueType::buf(graph_.node(id).type.shape), true));
    }
  }

  int operand(const HloNode& node, std::size_t k) const { return buf_.at(node.operands.at(k)); }
  const Shape& operand_shape(const HloNode& node, std::size_t k) const {
    return graph_.node(node.operands.at(k)).type.shape;
  }

  void call_kernel(const KernelSpec& spec, std::vector<int> args) {
    std::vector<Operand> ops;
    for (int a : args) ops.push_back(Operand::r(a));
    if (config_.mode == Mode::ExposedLate) {
      b_.call(spec.name(), std::move(ops));
      return;
    }
    const auto opaque = spec.with_variant(kernels::Variant::OpaquePrecompiled);
    auto fns = library_->opaque_kernel(opaque, "g" + std::to_string(kOpaqueKernelGrain), opaque_pipeline());
    b_.call(fns.front().name, std::move(ops));
    for (auto& fn : fns) extra_.try_emplace(fn.name, std::move(fn));
  }

  void lower_node(const HloNode& node) {
    const int out = buf_.at(node.id);
    const Shape& shape = node.type.shape;
    const graph::Attrs& a = node.attrs;
    if (elements(shape) == 0) return;

    switch (node.kind) {
      case OpKind::Neg:
      case OpKind::Exp:
      case OpKind::Tanh:
      case OpKind::Sigmoid:
      case OpKind::Relu: {
        const int x = operand(node, 0);
        emit_.nest(shape, [&](Operand lin, const std::vector<Operand>&) {
          const int v = b_.load(x, lin);
          const int r = node.kind == OpKind::Relu ? b_.arith(Op::FMax, {Operand::r(v), Operand::immf(0.0f)})
                                                  : b_.arith(unary_op(node.kind), {Operand::r(v)});
          b_.store(out, lin, Operand::r(r));
        });
        return;
      }

      case OpKind::Add:
      case OpKind::Sub:
      case OpKind::Mul:
      case OpKind::Div:
      case OpKind::Max: {
        const int x = operand(node, 0);
        const int y = operand(node, 1);
        emit_.nest(shape, [&](Operand lin, const std::vector<Operand>&) {
          const int v = b_.load(x, lin);
          const int w = b_.load(y, lin);
          const int r = b_.arith(binary_op(node.kind), {Operand::r(v), Operand::r(w)});
          b_.store(out, lin, Operand::r(r));
        });
        return;
      }

      case OpKind::Broadcast: {
        const int x = operand(node, 0);
        const Shape& xshape = operand_shape(node, 0);
        const Shape xs = strides_of(xshape);
        emit_.nest(shape, [&](Operand lin, const std::vector<Operand>& ivs) {
          std::vector<Operand> idx;
          Shape strides;
          for (std::size_t k = 0; k < a.dims.size(); ++k) {
            if (xshape[k] == 1) continue;
            idx.push_back(ivs[static_cast<std::size_t>(a.dims[k])]);
            strides.push_back(xs[k]);
          }
          const int v = b_.load(x, emit_.offset(idx, strides));
          b_.store(out, lin, Operand::r(v));
        });
        return;
      }

      case OpKind::Reshape:
        emit_.copy(operand(node, 0), out, shape);
        return;

      case OpKind::Transpose: {
        const int x = operand(node, 0);
        const Shape xs = strides_of(operand_shape(node, 0));
        Shape strides;
        for (auto p : a.dims) strides.push_back(xs[static_cast<std::size_t>(p)]);
        emit_.nest(shape, [&](Operand lin, const std::vector<Operand>& ivs) {
          const int v = b_.load(x, emit_.offset(ivs, strides));
          b_.store(out, lin, Operand::r(v));
        });
        return;
      }

      case OpKind::Slice: {
        const int x = operand(node, 0);
        const Shape xs = strides_of(operand_shape(node, 0));
        const auto axis = static_cast<std::size_t>(a.axis);
        emit_.nest(shape, [&](Operand lin, const std::vector<Operand>& ivs) {
          std::vector<Operand> idx = ivs;
          if (a.start != 0) idx[axis] = Operand::r(b_.arith(Op::IAdd, {ivs[axis], Operand::imm(a.start)}, "o"));
          const int v = b_.load(x, emit_.offset(idx, xs));
          b_.store(out, lin, Operand::r(v));
        });
        return;
      }

      case OpKind::Concat: {
        const auto axis = static_cast<std::size_t>(a.axis);
        const Shape os = strides_of(shape);
        std::int64_t base = 0;
        for (std::size_t k = 0; k < node.operands.size(); ++k) {
          const Shape& xshape = operand_shape(node, k);
          const int x = operand(node, k);
          if (elements(xshape) > 0) {
            emit_.nest(xshape, [&](Operand lin, const std::vector<Operand>& ivs) {
              std::vector<Operand> idx = ivs;
              if (base != 0) idx[axis] = Operand::r(b_.arith(Op::IAdd, {ivs[axis], Operand::imm(base)}, "o"));
              const int v = b_.load(x, lin);
              b_.store(out, emit_.offset(idx, os), Operand::r(v));
            });
          }
          base += xshape[axis];
        }
        return;
      }

      case OpKind::Reduce: {
        const Shape& xshape = operand_shape(node, 0);
        const auto axis = static_cast<std::size_t>(a.axis);
        std::int64_t outer = 1, inner = 1;
        for (std::size_t d = 0; d < axis; ++d) outer *= xshape[d];
        for (std::size_t d = axis + 1; d < xshape.size(); ++d) inner *= xshape[d];
        const std::int64_t extent = xshape[axis];
        if (extent == 0) {
          emit_.fill(out, shape, reduce_identity(a.reduce_op));
          return;
        }
        call_kernel(KernelSpec::reduce(outer, extent, inner, a.reduce_op), {operand(node, 0), out});
        return;
      }

      case OpKind::MatMul: {
        const Shape& as = operand_shape(node, 0);
        const Shape& bs = operand_shape(node, 1);
        if (as[1] == 0) {
          emit_.fill(out, shape, 0.0f);
          return;
        }
        call_kernel(KernelSpec::matmul(as[0], as[1], bs[1]), {operand(node, 0), operand(node, 1), out});
        return;
      }

      case OpKind::Conv2D: {
        const Shape& xs = operand_shape(node, 0);
        const Shape& ws = operand_shape(node, 1);
        if (ws[0] * ws[1] * ws[2] == 0) {
          emit_.fill(out, shape, 0.0f);
          return;
        }
        call_kernel(KernelSpec::conv2d(xs[0], xs[1], xs[2], xs[3], ws[0], ws[1], ws[3], a.stride),
                    {operand(node, 0), operand(node, 1), out});
        return;
      }

      case OpKind::Fused: {
        std::vector<int> ops;
        for (std::size_t k = 0; k < node.operands.size(); ++k) ops.push_back(operand(node, k));
        lower_fused(b_, *a.region, ops, out, config_);
        return;
      }

      case OpKind::Parameter:
      case OpKind::Constant:
        return;
    }
    throw Error(ErrorKind::UnsupportedOp, "cannot lower " + std::string(to_string(node.kind)));
  }

  const HloGraph& graph_;
  const LoweringConfig& config_;
  std::shared_ptr<const kernels::KernelLibrary> library_;
  FunctionBuilder b_;
  Emitter emit_;
  std::map<int, int> buf_;
  std::vector<int> outs_;
  std::map<std::string, ir::FjFunction> extra_;
};

}  // namespace

void lower_fused(FunctionBuilder& b, const graph::FusedRegion& region, std::span<const int> operands, int out,
                 const LoweringConfig& config) {
  config.validate();
  if (region.members.empty()) throw Error(ErrorKind::InvalidAttribute, "empty fused region");
  Emitter emit(b, config);
  emit.nest(region.fused_type.shape, [&](Operand lin, const std::vector<Operand>&) {
    // Element loads keyed by operand index, scalar loads by -1 - index.
    std::map<int, int> loads;
    std::vector<int> vals(region.members.size(), -1);
    auto read = [&](const graph::FusedOperand& o, bool scalar) {
      if (!o.external) return vals.at(static_cast<std::size_t>(o.index));
      auto [it, fresh] = loads.try_emplace(scalar ? -1 - o.index : o.index, -1);
      if (fresh) it->second = b.load(operands[static_cast<std::size_t>(o.index)], scalar ? Operand::imm(0) : lin);
      return it->second;
    };
    for (std::size_t m = 0; m < region.members.size(); ++m) {
      const graph::FusedMember& member = region.members[m];
      if (member.kind == OpKind::Broadcast) {
        vals[m] = read(member.operands.at(0), true);
      } else if (member.kind == OpKind::Relu) {
        vals[m] = b.arith(Op::FMax, {Operand::r(read(member.operands.at(0), false)), Operand::immf(0.0f)});
      } else if (graph::is_unary_elementwise(member.kind)) {
        vals[m] = b.arith(unary_op(member.kind), {Operand::r(read(member.operands.at(0), false))});
      } else {
        const int x = read(member.operands.at(0), false);
        const int y = read(member.operands.at(1), false);
        vals[m] = b.arith(binary_op(member.kind), {Operand::r(x), Operand::r(y)});
      }
    }
    b.store(out, lin, Operand::r(vals.back()));
  });
}

ir::FjModule link_kernels(const ir::FjModule& module, const kernels::KernelLibrary& library) {
  ir::FjModule m = module;
  std::vector<std::string> work;
  for (const auto& [name, fn] : m.functions) work.push_back(name);
  while (!work.empty()) {
    const std::string name = work.back();
    work.pop_back();
    std::set<std::string> callees;
    ir::for_each_instr(m.function(name).body, [&](const ir::Instr& in) {
      if (in.op == Op::Call) callees.insert(in.callee);
    });
    for (const auto& callee : callees) {
      KernelSpec spec;
      try {
        spec = kernels::parse_kernel_name(callee);
      } catch (const Error&) {
        if (!m.contains(callee)) throw Error(ErrorKind::KernelMissing, "undefined function @" + callee);
        continue;
      }
      if (spec.variant != kernels::Variant::InlineIR) {
        if (!m.contains(callee)) throw Error(ErrorKind::KernelMissing, "opaque kernel @" + callee + " is not linked");
        continue;
      }
      auto fn = library.inline_kernel(spec);
      if (m.contains(callee)) {
        const auto& existing = m.function(callee);
        if (!existing.declared && !ir::isomorphic(existing, fn)) {
          throw Error(ErrorKind::DuplicateSymbol, "@" + callee + " differs from the library kernel");
        }
        if (!existing.declared) continue;
        m.functions.erase(callee);
      }
      m.add(std::move(fn));
      work.push_back(callee);
    }
  }
  return m;
}

ir::FjModule lower_graph(const graph::HloGraph& graph, const LoweringConfig& config) {
  config.validate();
  graph::validate_or_throw(graph);
  return GraphLowering(graph, config).run();
}

CompileResult compile_graph(const graph::HloGraph& graph, const CompileOptions& options) {
  options.lowering.validate();
  options.passes.validate();
  CompileResult r;
  if (options.optimize_graph) {
    graph_opt::HloPipelineConfig hc;
    hc.on_pass = options.on_graph_pass;
    r.optimized_graph = graph_opt::run_hlo_pipeline(graph, hc);
  } else {
    graph::validate_or_throw(graph);
    r.optimized_graph = graph;
  }
  r.lowered = lower_graph(r.optimized_graph, options.lowering);
  opt::PipelineOptions po;
  po.config = options.passes;
  po.config.workers_hint = options.lowering.workers;
  po.mode = options.lowering.mode;
  po.on_pass = options.on_fj_pass;
  r.module = opt::run_fj_pipeline(r.lowered, po);
  return r;
}

}  // namespace fjc::lowering
