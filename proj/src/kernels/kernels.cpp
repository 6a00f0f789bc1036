#include "fjc/kernels/kernels.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "fjc/opt/passes.hpp"

namespace fjc::kernels {

using ir::FunctionBuilder;
using ir::Op;
using ir::Operand;
using ir::ValueType;

namespace {

Operand R(int reg) { return Operand::r(reg); }
Operand I(std::int64_t v) { return Operand::imm(v); }

[[noreturn]] void bad_name(const std::string& name) {
  throw Error(ErrorKind::InvalidAttribute, "not a kernel name: @" + name);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::int64_t> parse_dims(const std::string& s, std::size_t want, const std::string& name) {
  std::vector<std::int64_t> out;
  for (const auto& part : split(s, 'x')) {
    if (part.empty() || !std::all_of(part.begin(), part.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      bad_name(name);
    }
    out.push_back(std::stoll(part));
  }
  if (out.size() != want) bad_name(name);
  return out;
}

std::string join_dims(std::vector<std::int64_t>::const_iterator first, std::vector<std::int64_t>::const_iterator last) {
  std::string s;
  for (auto it = first; it != last; ++it) s += (it == first ? "" : "x") + std::to_string(*it);
  return s;
}

void require_positive(const std::vector<std::int64_t>& dims, const char* what) {
  for (auto d : dims) {
    if (d < 1) throw Error(ErrorKind::InvalidAttribute, std::string(what) + " dimensions must be positive");
  }
}

Op combine_op(ReduceOp op) { return op == ReduceOp::Sum ? Op::FAdd : Op::FMax; }

// Emits the fixed pairwise tree over register partials and returns the root.
int combine_registers(FunctionBuilder& b, Op op, std::vector<int> partials) {
  while (partials.size() > 1) {
    std::vector<int> next;
    for (std::size_t i = 0; i + 1 < partials.size(); i += 2) {
      next.push_back(b.arith(op, {R(partials[i]), R(partials[i + 1])}, "c"));
    }
    if (partials.size() % 2 == 1) next.push_back(partials.back());
    partials = std::move(next);
  }
  return partials.front();
}

// index = base + offset, folding a zero offset away.
Operand offset_index(FunctionBuilder& b, Operand base, std::int64_t offset, const char* hint) {
  if (offset == 0) return base;
  if (base.is_imm()) return I(base.i + offset);
  return R(b.arith(Op::IAdd, {base, I(offset)}, hint));
}

}  // namespace

KernelSpec KernelSpec::matmul(std::int64_t m, std::int64_t k, std::int64_t n) {
  return KernelSpec{KernelKind::MatMul, {m, k, n}, ReduceOp::Sum, Variant::InlineIR};
}

KernelSpec KernelSpec::conv2d(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t ci, std::int64_t kh,
                              std::int64_t kw, std::int64_t co, std::int64_t stride) {
  return KernelSpec{KernelKind::Conv2D, {n, h, w, ci, kh, kw, co, stride}, ReduceOp::Sum, Variant::InlineIR};
}

KernelSpec KernelSpec::reduce(std::int64_t outer, std::int64_t extent, std::int64_t inner, ReduceOp op) {
  return KernelSpec{KernelKind::Reduce, {outer, extent, inner}, op, Variant::InlineIR};
}

KernelSpec KernelSpec::with_variant(Variant v) const {
  KernelSpec s = *this;
  s.variant = v;
  return s;
}

std::string KernelSpec::name() const {
  std::string s = "kernel.";
  switch (kind) {
    case KernelKind::MatMul:
      s += "matmul." + join_dims(dims.begin(), dims.end());
      break;
    case KernelKind::Conv2D:
      s += "conv2d." + join_dims(dims.begin(), dims.begin() + 4) + "." + join_dims(dims.begin() + 4, dims.begin() + 7) +
           ".s" + std::to_string(dims[7]);
      break;
    case KernelKind::Reduce:
      s += std::string("reduce.") + (reduce_op == ReduceOp::Sum ? "sum." : "max.") + join_dims(dims.begin(), dims.end());
      break;
  }
  if (variant == Variant::OpaquePrecompiled) s += ".opaque";
  return s;
}

std::vector<ValueType> KernelSpec::signature() const {
  const auto& d = dims;
  switch (kind) {
    case KernelKind::MatMul:
      return {ValueType::buf({d[0], d[1]}), ValueType::buf({d[1], d[2]}), ValueType::buf({d[0], d[2]})};
    case KernelKind::Conv2D: {
      const auto oh = (d[1] - d[4]) / d[7] + 1;
      const auto ow = (d[2] - d[5]) / d[7] + 1;
      return {ValueType::buf({d[0], d[1], d[2], d[3]}), ValueType::buf({d[4], d[5], d[3], d[6]}),
              ValueType::buf({d[0], oh, ow, d[6]})};
    }
    case KernelKind::Reduce:
      return {ValueType::buf({d[0], d[1], d[2]}), ValueType::buf({d[0], d[2]})};
  }
  return {};
}

KernelSpec parse_kernel_name(const std::string& name) {
  auto parts = split(name, '.');
  Variant variant = Variant::InlineIR;
  if (!parts.empty() && parts.back() == "opaque") {
    variant = Variant::OpaquePrecompiled;
    parts.pop_back();
  }
  if (parts.size() < 3 || parts[0] != "kernel") bad_name(name);
  KernelSpec spec;
  if (parts[1] == "matmul" && parts.size() == 3) {
    spec.kind = KernelKind::MatMul;
    spec.dims = parse_dims(parts[2], 3, name);
  } else if (parts[1] == "conv2d" && parts.size() == 5 && parts[4].size() > 1 && parts[4][0] == 's') {
    spec.kind = KernelKind::Conv2D;
    spec.dims = parse_dims(parts[2], 4, name);
    const auto f = parse_dims(parts[3], 3, name);
    spec.dims.insert(spec.dims.end(), f.begin(), f.end());
    spec.dims.push_back(parse_dims(parts[4].substr(1), 1, name)[0]);
  } else if (parts[1] == "reduce" && parts.size() == 4 && (parts[2] == "sum" || parts[2] == "max")) {
    spec.kind = KernelKind::Reduce;
    spec.reduce_op = parts[2] == "sum" ? ReduceOp::Sum : ReduceOp::Max;
    spec.dims = parse_dims(parts[3], 3, name);
  } else {
    bad_name(name);
  }
  spec.variant = variant;
  if (spec.name() != name) bad_name(name);
  return spec;
}

ir::FjFunction build_matmul(std::int64_t m, std::int64_t k, std::int64_t n) {
  require_positive({m, k, n}, "matmul");
  FunctionBuilder b(KernelSpec::matmul(m, k, n).name());
  const int a = b.param("a", ValueType::buf({m, k}));
  const int bm = b.param("b", ValueType::buf({k, n}));
  const int c = b.param("c", ValueType::buf({m, n}), true);
  const std::int64_t leaves = leaf_count(k);
  b.pfor(I(0), I(m), [&](int i) {
    const int row = b.arith(Op::IMul, {R(i), I(k)}, "row");
    b.pfor(I(0), I(n), [&](int j) {
      std::vector<int> partials;
      for (std::int64_t leaf = 0; leaf < leaves; ++leaf) {
        const std::int64_t s = leaf * kLeafSize;
        const std::int64_t len = std::min(kLeafSize, k - s);
        const Operand as = offset_index(b, R(row), s, "as");
        const Operand bs = offset_index(b, R(j), s * n, "bs");
        const int x0 = b.load(a, as, "x");
        const int y0 = b.load(bm, bs, "y");
        const int acc = b.arith(Op::FMul, {R(x0), R(y0)}, "acc");
        if (len > 1) {
          const int bi = b.arith(Op::IAdd, {bs, I(n)}, "bi");
          const int lo = b.arith(Op::IAdd, {as, I(1)}, "lo");
          const int hi = b.arith(Op::IAdd, {as, I(len)}, "hi");
          b.for_(R(lo), R(hi), [&](int l) {
            const int x = b.load(a, R(l), "x");
            const int y = b.load(bm, R(bi), "y");
            const int t = b.arith(Op::FMul, {R(x), R(y)}, "t");
            b.assign(Op::FAdd, acc, {R(acc), R(t)});
            b.assign(Op::IAdd, bi, {R(bi), I(n)});
          }, "l");
        }
        partials.push_back(acc);
      }
      const int sum = combine_registers(b, Op::FAdd, partials);
      const int ci = b.arith(Op::IMul, {R(i), I(n)}, "ci");
      const int idx = b.arith(Op::IAdd, {R(ci), R(j)}, "idx");
      b.store(c, R(idx), R(sum));
    }, 0, "j");
  }, 0, "i");
  b.ret();
  auto fn = std::move(b).finish();
  fn.inline_candidate = true;
  return fn;
}

ir::FjFunction build_conv2d(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t ci, std::int64_t kh,
                            std::int64_t kw, std::int64_t co, std::int64_t stride) {
  require_positive({n, h, w, ci, kh, kw, co, stride}, "conv2d");
  if (h < kh || w < kw) throw Error(ErrorKind::InvalidAttribute, "conv2d filter larger than input");
  const std::int64_t oh = (h - kh) / stride + 1;
  const std::int64_t ow = (w - kw) / stride + 1;
  FunctionBuilder b(KernelSpec::conv2d(n, h, w, ci, kh, kw, co, stride).name());
  const int x = b.param("x", ValueType::buf({n, h, w, ci}));
  const int f = b.param("w", ValueType::buf({kh, kw, ci, co}));
  const int y = b.param("y", ValueType::buf({n, oh, ow, co}), true);
  b.pfor(I(0), I(n), [&](int bi) {
    b.pfor(I(0), I(oh), [&](int r) {
      b.pfor(I(0), I(ow), [&](int q) {
        // first input element of the receptive field
        const int t0 = b.arith(Op::IMul, {R(bi), I(h)}, "t");
        const int t1 = b.arith(Op::IMul, {R(r), I(stride)}, "t");
        const int t2 = b.arith(Op::IAdd, {R(t0), R(t1)}, "t");
        const int t3 = b.arith(Op::IMul, {R(t2), I(w)}, "t");
        const int t4 = b.arith(Op::IMul, {R(q), I(stride)}, "t");
        const int t5 = b.arith(Op::IAdd, {R(t3), R(t4)}, "t");
        const int base = b.arith(Op::IMul, {R(t5), I(ci)}, "base");
        b.pfor(I(0), I(co), [&](int o) {
          const int acc = b.arith(Op::FMov, {Operand::immf(0.0f)}, "acc");
          for (std::int64_t dy = 0; dy < kh; ++dy) {
            const int lo = b.arith(Op::IAdd, {R(base), I(dy * w * ci)}, "lo");
            const int hi = b.arith(Op::IAdd, {R(lo), I(kw * ci)}, "hi");
            const int wi = b.arith(Op::IAdd, {R(o), I(dy * kw * ci * co)}, "wi");
            b.for_(R(lo), R(hi), [&](int l) {
              const int xv = b.load(x, R(l), "xv");
              const int wv = b.load(f, R(wi), "wv");
              const int t = b.arith(Op::FMul, {R(xv), R(wv)}, "p");
              b.assign(Op::FAdd, acc, {R(acc), R(t)});
              b.assign(Op::IAdd, wi, {R(wi), I(co)});
            }, "l");
          }
          const int u0 = b.arith(Op::IMul, {R(bi), I(oh)}, "u");
          const int u1 = b.arith(Op::IAdd, {R(u0), R(r)}, "u");
          const int u2 = b.arith(Op::IMul, {R(u1), I(ow)}, "u");
          const int u3 = b.arith(Op::IAdd, {R(u2), R(q)}, "u");
          const int u4 = b.arith(Op::IMul, {R(u3), I(co)}, "u");
          const int idx = b.arith(Op::IAdd, {R(u4), R(o)}, "idx");
          b.store(y, R(idx), R(acc));
        }, 0, "o");
      }, 0, "q");
    }, 0, "r");
  }, 0, "n");
  b.ret();
  auto fn = std::move(b).finish();
  fn.inline_candidate = true;
  return fn;
}

ir::FjFunction build_reduce(std::int64_t extent, ReduceOp op) { return build_reduce(1, extent, 1, op); }

ir::FjFunction build_reduce(std::int64_t outer, std::int64_t extent, std::int64_t inner, ReduceOp op) {
  require_positive({outer, extent, inner}, "reduce");
  FunctionBuilder b(KernelSpec::reduce(outer, extent, inner, op).name());
  const int x = b.param("x", ValueType::buf({outer, extent, inner}));
  const int y = b.param("y", ValueType::buf({outer, inner}), true);
  const Op comb = combine_op(op);
  const std::int64_t leaves = leaf_count(extent);
  const int part = leaves > 1 ? b.alloc(ValueType::buf({outer * inner * leaves}), "part") : -1;

  // Runs body(o, i) over the outer x inner output space; unit extents get no loop.
  auto over_outputs = [&](const std::function<void(Operand, Operand)>& body) {
    auto inner_loop = [&](Operand o) {
      if (inner == 1) {
        body(o, I(0));
      } else {
        b.pfor(I(0), I(inner), [&](int i) { body(o, R(i)); }, 0, "i");
      }
    };
    if (outer == 1) {
      inner_loop(I(0));
    } else {
      b.pfor(I(0), I(outer), [&](int o) { inner_loop(R(o)); }, 0, "o");
    }
  };
  // o * a + i, folding immediates
  auto lin = [&](Operand o, std::int64_t a, Operand i, const char* hint) -> Operand {
    Operand scaled = o.is_imm() ? I(o.i * a) : R(b.arith(Op::IMul, {o, I(a)}, hint));
    if (i.is_imm() && i.i == 0) return scaled;
    if (scaled.is_imm() && scaled.i == 0) return i;
    return R(b.arith(Op::IAdd, {scaled, i}, hint));
  };
  // Serial fold of `len` elements starting at linear index `start`, stride `inner`.
  auto leaf_fold = [&](Operand start, Operand len) -> int {
    const int acc = b.load(x, start, "acc");
    if (inner == 1) {
      const Operand lo = start.is_imm() ? I(start.i + 1) : R(b.arith(Op::IAdd, {start, I(1)}, "lo"));
      const Operand hi = start.is_imm() && len.is_imm() ? I(start.i + len.i)
                                                         : R(b.arith(Op::IAdd, {start, len}, "hi"));
      b.for_(lo, hi, [&](int l) {
        const int v = b.load(x, R(l), "v");
        b.assign(comb, acc, {R(acc), R(v)});
      }, "l");
    } else {
      const int xi = b.arith(Op::IAdd, {start, I(inner)}, "xi");
      b.for_(I(1), len, [&](int) {
        const int v = b.load(x, R(xi), "v");
        b.assign(comb, acc, {R(acc), R(v)});
        b.assign(Op::IAdd, xi, {R(xi), I(inner)});
      }, "l");
    }
    return acc;
  };

  if (leaves == 1) {
    over_outputs([&](Operand o, Operand i) {
      const Operand start = lin(o, extent * inner, i, "s");
      const int acc = leaf_fold(start, I(extent));
      b.store(y, lin(o, inner, i, "out"), R(acc));
    });
  } else {
    over_outputs([&](Operand o, Operand i) {
      const Operand row = lin(o, extent * inner, i, "s");
      const Operand slot = lin(o, inner, i, "slot");
      const Operand pbase = slot.is_imm() ? I(slot.i * leaves) : R(b.arith(Op::IMul, {slot, I(leaves)}, "pb"));
      const std::int64_t full = extent / kLeafSize;
      const std::int64_t tail = extent % kLeafSize;
      b.pfor(I(0), I(full), [&](int leaf) {
        const int off = b.arith(Op::IMul, {R(leaf), I(kLeafSize * inner)}, "off");
        const int start = b.arith(Op::IAdd, {row, R(off)}, "start");
        const int acc = leaf_fold(R(start), I(kLeafSize));
        const int at = b.arith(Op::IAdd, {pbase, R(leaf)}, "at");
        b.store(part, R(at), R(acc));
      }, 0, "leaf");
      if (tail > 0) {
        const Operand start = offset_index(b, row, full * kLeafSize * inner, "start");
        const int acc = leaf_fold(start, I(tail));
        b.store(part, offset_index(b, pbase, full, "at"), R(acc));
      }
    });
    over_outputs([&](Operand o, Operand i) {
      const Operand slot = lin(o, inner, i, "slot");
      const Operand pb = slot.is_imm() ? I(slot.i * leaves) : R(b.arith(Op::IMul, {slot, I(leaves)}, "pb"));
      std::int64_t count = leaves;
      while (count > 1) {
        const std::int64_t half = count / 2;
        b.for_(I(0), I(half), [&](int k) {
          const int two = b.arith(Op::IAdd, {R(k), R(k)}, "two");
          const int l = b.arith(Op::IAdd, {pb, R(two)}, "l");
          const int r = b.arith(Op::IAdd, {R(l), I(1)}, "r");
          const int dst = b.arith(Op::IAdd, {pb, R(k)}, "d");
          const int lv = b.load(part, R(l), "lv");
          const int rv = b.load(part, R(r), "rv");
          const int cv = b.arith(comb, {R(lv), R(rv)}, "cv");
          b.store(part, R(dst), R(cv));
        }, "k");
        if (count % 2 == 1) {
          const Operand from = offset_index(b, pb, count - 1, "from");
          const Operand to = offset_index(b, pb, half, "to");
          const int v = b.load(part, from, "carry");
          b.store(part, to, R(v));
        }
        count = (count + 1) / 2;
      }
      const int root = b.load(part, pb, "root");
      b.store(y, slot, R(root));
    });
  }
  b.ret();
  auto fn = std::move(b).finish();
  fn.inline_candidate = true;
  return fn;
}

ir::FjFunction build_kernel(const KernelSpec& spec) {
  const auto& d = spec.dims;
  switch (spec.kind) {
    case KernelKind::MatMul:
      if (d.size() == 3) return build_matmul(d[0], d[1], d[2]);
      break;
    case KernelKind::Conv2D:
      if (d.size() == 8) return build_conv2d(d[0], d[1], d[2], d[3], d[4], d[5], d[6], d[7]);
      break;
    case KernelKind::Reduce:
      if (d.size() == 3) return build_reduce(d[0], d[1], d[2], spec.reduce_op);
      break;
  }
  throw Error(ErrorKind::InvalidAttribute, "kernel spec has the wrong number of dimensions");
}

namespace {

std::vector<ir::FjFunction> precompile_body(ir::FjFunction fn, const std::string& name, const Pipeline& pipeline) {
  const auto cost = opt::estimate_cost(fn.body).units;
  fn.name = name;
  fn.inline_candidate = false;
  ir::FjModule module;
  module.entry = name;
  module.add(std::move(fn));
  ir::FjModule compiled = pipeline(module);
  std::vector<ir::FjFunction> out;
  for (auto& [fname, f] : compiled.functions) {
    f.opaque = true;
    f.inline_candidate = false;
    if (fname == name) f.cost = cost;
    out.push_back(f);
  }
  // the kernel itself first, helpers after
  std::stable_partition(out.begin(), out.end(), [&](const ir::FjFunction& f) { return f.name == name; });
  return out;
}

}  // namespace

std::vector<ir::FjFunction> precompile_opaque(const KernelSpec& spec, const Pipeline& pipeline) {
  return precompile_body(build_kernel(spec), spec.with_variant(Variant::OpaquePrecompiled).name(), pipeline);
}

KernelLibrary::KernelLibrary(bool build_missing) : build_missing_(build_missing) {}

std::shared_ptr<KernelLibrary> KernelLibrary::from_module(const ir::FjModule& module, bool build_missing) {
  auto lib = std::make_shared<KernelLibrary>(build_missing);
  for (const auto& [name, fn] : module.functions) {
    KernelSpec spec;
    try {
      spec = parse_kernel_name(name);
    } catch (const Error&) {
      continue;
    }
    if (spec.variant == Variant::InlineIR && !fn.declared) lib->inline_[name] = fn;
  }
  return lib;
}

std::shared_ptr<KernelLibrary> KernelLibrary::load(const std::string& path, bool build_missing) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read kernel library " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_module(ir::parse_fj_text(ss.str()), build_missing);
}

ir::FjFunction KernelLibrary::inline_kernel(const KernelSpec& spec) const {
  const std::string name = spec.with_variant(Variant::InlineIR).name();
  std::lock_guard lock(mu_);
  auto it = inline_.find(name);
  if (it != inline_.end()) return it->second;
  if (!build_missing_) throw Error(ErrorKind::KernelMissing, "kernel library lacks @" + name);
  auto fn = build_kernel(spec.with_variant(Variant::InlineIR));
  inline_.emplace(name, fn);
  return fn;
}

bool KernelLibrary::contains(const KernelSpec& spec) const {
  std::lock_guard lock(mu_);
  return inline_.count(spec.with_variant(Variant::InlineIR).name()) != 0;
}

std::vector<std::string> KernelLibrary::names() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [name, fn] : inline_) out.push_back(name);
  return out;
}

std::vector<ir::FjFunction> KernelLibrary::opaque_kernel(const KernelSpec& spec, const std::string& pipeline_key,
                                                         const Pipeline& pipeline) const {
  const std::string key = spec.with_variant(Variant::OpaquePrecompiled).name() + "|" + pipeline_key;
  {
    std::lock_guard lock(mu_);
    auto it = opaque_.find(key);
    if (it != opaque_.end()) return it->second;
  }
  auto out = precompile_body(inline_kernel(spec), spec.with_variant(Variant::OpaquePrecompiled).name(), pipeline);
  std::lock_guard lock(mu_);
  opaque_.emplace(key, out);
  return out;
}

ir::FjModule kernel_module(const std::vector<KernelSpec>& specs) {
  ir::FjModule m;
  for (const auto& spec : specs) {
    const auto fn = build_kernel(spec.with_variant(Variant::InlineIR));
    if (!m.contains(fn.name)) m.add(fn);
  }
  return m;
}

}  // namespace fjc::kernels
