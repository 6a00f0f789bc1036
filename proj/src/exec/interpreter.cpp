#include "fjc/exec/interpreter.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include "fjc/reduction_order.hpp"
#include "fjc/scalar_ops.hpp"

namespace fjc::exec {

using graph::DType;
using graph::HloGraph;
using graph::HloNode;
using graph::OpKind;

namespace {

using Index = std::vector<std::int64_t>;

std::vector<std::int64_t> strides_of(const std::vector<std::int64_t>& shape) {
  std::vector<std::int64_t> s(shape.size(), 1);
  for (std::size_t d = shape.size(); d-- > 1;) s[d - 1] = s[d] * shape[d];
  return s;
}

// Calls fn(linear, index) for every element of `shape` in row-major order.
template <typename Fn>
void for_each_index(const std::vector<std::int64_t>& shape, Fn&& fn) {
  std::int64_t total = 1;
  for (auto d : shape) total *= d;
  Index idx(shape.size(), 0);
  for (std::int64_t lin = 0; lin < total; ++lin) {
    fn(lin, idx);
    for (std::size_t d = shape.size(); d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
}

std::int64_t offset(const Index& idx, const std::vector<std::int64_t>& strides) {
  std::int64_t o = 0;
  for (std::size_t d = 0; d < idx.size(); ++d) o += idx[d] * strides[d];
  return o;
}

// Applies a layout-only transform to whichever payload the tensor carries.
// `source(out_linear, out_index)` yields the linear index to copy from.
template <typename SourceFn>
TensorBuffer gather(const TensorBuffer& x, const graph::TensorType& out_type, SourceFn&& source) {
  TensorBuffer out = TensorBuffer::zeros(out_type);
  for_each_index(out_type.shape, [&](std::int64_t lin, const Index& idx) {
    const auto src = static_cast<std::size_t>(source(lin, idx));
    if (x.dtype == DType::F32) {
      out.f32[static_cast<std::size_t>(lin)] = x.f32[src];
    } else {
      out.i32[static_cast<std::size_t>(lin)] = x.i32[src];
    }
  });
  return out;
}

float apply_unary(OpKind kind, float x) {
  switch (kind) {
    case OpKind::Neg: return scalar::neg(x);
    case OpKind::Exp: return scalar::exp(x);
    case OpKind::Tanh: return scalar::tanh(x);
    case OpKind::Sigmoid: return scalar::sigmoid(x);
    case OpKind::Relu: return scalar::relu(x);
    default: break;
  }
  throw Error(ErrorKind::UnsupportedOp, "not a unary op: " + std::string(to_string(kind)));
}

float apply_binary(OpKind kind, float a, float b) {
  switch (kind) {
    case OpKind::Add: return scalar::add(a, b);
    case OpKind::Sub: return scalar::sub(a, b);
    case OpKind::Mul: return scalar::mul(a, b);
    case OpKind::Div: return scalar::div(a, b);
    case OpKind::Max: return scalar::max(a, b);
    default: break;
  }
  throw Error(ErrorKind::UnsupportedOp, "not a binary op: " + std::string(to_string(kind)));
}

TensorBuffer eval_fused(const HloNode& node, const std::vector<const TensorBuffer*>& ops) {
  const graph::FusedRegion& region = *node.attrs.region;
  TensorBuffer out = TensorBuffer::zeros(node.type);
  std::vector<float> vals(region.members.size());
  for (std::size_t e = 0; e < out.f32.size(); ++e) {
    for (std::size_t m = 0; m < region.members.size(); ++m) {
      const graph::FusedMember& member = region.members[m];
      auto read = [&](const graph::FusedOperand& o) {
        if (!o.external) return vals[static_cast<std::size_t>(o.index)];
        const TensorBuffer& t = *ops[static_cast<std::size_t>(o.index)];
        return member.kind == OpKind::Broadcast ? t.f32[0] : t.f32[e];
      };
      if (member.kind == OpKind::Broadcast) {
        vals[m] = read(member.operands[0]);
      } else if (graph::is_unary_elementwise(member.kind)) {
        vals[m] = apply_unary(member.kind, read(member.operands[0]));
      } else {
        vals[m] = apply_binary(member.kind, read(member.operands[0]), read(member.operands[1]));
      }
    }
    out.f32[e] = vals.back();
  }
  return out;
}

TensorBuffer eval_node(const HloNode& node, const std::vector<const TensorBuffer*>& ops) {
  const graph::Attrs& a = node.attrs;
  switch (node.kind) {
    case OpKind::Parameter:
      break;

    case OpKind::Constant: {
      TensorBuffer t = TensorBuffer::zeros(node.type);
      if (t.dtype == DType::F32) {
        t.f32 = a.f32_values;
      } else {
        t.i32 = a.i32_values;
      }
      return t;
    }

    case OpKind::Neg:
    case OpKind::Exp:
    case OpKind::Tanh:
    case OpKind::Sigmoid:
    case OpKind::Relu: {
      TensorBuffer t = TensorBuffer::zeros(node.type);
      for (std::size_t i = 0; i < t.f32.size(); ++i) t.f32[i] = apply_unary(node.kind, ops[0]->f32[i]);
      return t;
    }

    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div:
    case OpKind::Max: {
      TensorBuffer t = TensorBuffer::zeros(node.type);
      for (std::size_t i = 0; i < t.f32.size(); ++i) {
        t.f32[i] = apply_binary(node.kind, ops[0]->f32[i], ops[1]->f32[i]);
      }
      return t;
    }

    case OpKind::Broadcast: {
      const TensorBuffer& x = *ops[0];
      const auto xs = strides_of(x.shape);
      return gather(x, node.type, [&](std::int64_t, const Index& idx) {
        std::int64_t src = 0;
        for (std::size_t k = 0; k < a.dims.size(); ++k) {
          const auto i = x.shape[k] == 1 ? 0 : idx[static_cast<std::size_t>(a.dims[k])];
          src += i * xs[k];
        }
        return src;
      });
    }

    case OpKind::Reshape:
      return gather(*ops[0], node.type, [](std::int64_t lin, const Index&) { return lin; });

    case OpKind::Transpose: {
      const auto xs = strides_of(ops[0]->shape);
      return gather(*ops[0], node.type, [&](std::int64_t, const Index& idx) {
        std::int64_t src = 0;
        for (std::size_t d = 0; d < idx.size(); ++d) src += idx[d] * xs[static_cast<std::size_t>(a.dims[d])];
        return src;
      });
    }

    case OpKind::Reduce: {
      const TensorBuffer& x = *ops[0];
      const auto axis = static_cast<std::size_t>(a.axis);
      std::int64_t outer = 1, inner = 1;
      for (std::size_t d = 0; d < axis; ++d) outer *= x.shape[d];
      for (std::size_t d = axis + 1; d < x.shape.size(); ++d) inner *= x.shape[d];
      const std::int64_t extent = x.shape[axis];
      TensorBuffer t = TensorBuffer::zeros(node.type);
      for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t i = 0; i < inner; ++i) {
          t.f32[static_cast<std::size_t>(o * inner + i)] =
              tree_reduce(a.reduce_op, extent, [&](std::int64_t e) {
                return x.f32[static_cast<std::size_t>((o * extent + e) * inner + i)];
              });
        }
      }
      return t;
    }

    case OpKind::MatMul: {
      const TensorBuffer& A = *ops[0];
      const TensorBuffer& B = *ops[1];
      const std::int64_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
      TensorBuffer t = TensorBuffer::zeros(node.type);
      for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
          t.f32[static_cast<std::size_t>(i * n + j)] =
              tree_reduce(ReduceOp::Sum, k, [&](std::int64_t l) {
                return scalar::mul(A.f32[static_cast<std::size_t>(i * k + l)],
                                   B.f32[static_cast<std::size_t>(l * n + j)]);
              });
        }
      }
      return t;
    }

    case OpKind::Conv2D: {
      const TensorBuffer& in = *ops[0];
      const TensorBuffer& w = *ops[1];
      const auto is = strides_of(in.shape);
      const auto ws = strides_of(w.shape);
      const std::int64_t kh = w.shape[0], kw = w.shape[1], ci = w.shape[2];
      TensorBuffer t = TensorBuffer::zeros(node.type);
      for_each_index(node.type.shape, [&](std::int64_t lin, const Index& o) {
        float acc = 0.0f;
        for (std::int64_t y = 0; y < kh; ++y) {
          for (std::int64_t x = 0; x < kw; ++x) {
            for (std::int64_t c = 0; c < ci; ++c) {
              const auto iv = in.f32[static_cast<std::size_t>(
                  o[0] * is[0] + (o[1] * a.stride + y) * is[1] + (o[2] * a.stride + x) * is[2] + c)];
              const auto wv = w.f32[static_cast<std::size_t>(y * ws[0] + x * ws[1] + c * ws[2] + o[3])];
              acc = scalar::add(acc, scalar::mul(iv, wv));
            }
          }
        }
        t.f32[static_cast<std::size_t>(lin)] = acc;
      });
      return t;
    }

    case OpKind::Concat: {
      const auto axis = static_cast<std::size_t>(a.axis);
      TensorBuffer t = TensorBuffer::zeros(node.type);
      const auto ts = strides_of(node.type.shape);
      std::int64_t base = 0;
      for (const TensorBuffer* op : ops) {
        for_each_index(op->shape, [&](std::int64_t lin, const Index& idx) {
          Index dst = idx;
          dst[axis] += base;
          const auto d = static_cast<std::size_t>(offset(dst, ts));
          if (t.dtype == DType::F32) {
            t.f32[d] = op->f32[static_cast<std::size_t>(lin)];
          } else {
            t.i32[d] = op->i32[static_cast<std::size_t>(lin)];
          }
        });
        base += op->shape[axis];
      }
      return t;
    }

    case OpKind::Slice: {
      const auto xs = strides_of(ops[0]->shape);
      const auto axis = static_cast<std::size_t>(a.axis);
      return gather(*ops[0], node.type, [&](std::int64_t, const Index& idx) {
        Index src = idx;
        src[axis] += a.start;
        return offset(src, xs);
      });
    }

    case OpKind::Fused:
      return eval_fused(node, ops);
  }
  throw Error(ErrorKind::UnsupportedOp, "cannot interpret " + std::string(to_string(node.kind)));
}

}  // namespace

void check_inputs(std::span<const graph::TensorType> expected,
                  std::span<const TensorBuffer> inputs) {
  if (expected.size() != inputs.size()) {
    throw Error(ErrorKind::InputMismatch, "expected " + std::to_string(expected.size()) +
                                              " inputs, got " + std::to_string(inputs.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (inputs[i].type() != expected[i] || !inputs[i].consistent()) {
      throw Error(ErrorKind::InputMismatch, "parameter " + std::to_string(i) + " expects " +
                                                expected[i].to_string() + ", got " +
                                                inputs[i].type().to_string());
    }
  }
}

std::vector<TensorBuffer> interpret_hlo(const HloGraph& graph, std::span<const TensorBuffer> inputs) {
  std::vector<graph::TensorType> expected;
  for (int p : graph.parameters()) expected.push_back(graph.node(p).type);
  check_inputs(expected, inputs);

  std::map<int, TensorBuffer> values;
  for (std::size_t i = 0; i < graph.parameters().size(); ++i) {
    values[graph.parameters()[i]] = inputs[i];
  }
  for (int id : graph::topo_order(graph)) {
    const HloNode& node = graph.node(id);
    if (node.kind == OpKind::Parameter) continue;
    std::vector<const TensorBuffer*> ops;
    for (int op : node.operands) ops.push_back(&values.at(op));
    values[id] = eval_node(node, ops);
  }
  std::vector<TensorBuffer> outputs;
  for (int out : graph.outputs()) outputs.push_back(values.at(out));
  return outputs;
}

CompareReport compare(std::span<const TensorBuffer> a, std::span<const TensorBuffer> b,
                      double tolerance) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::TypeMismatch, "output counts differ: " + std::to_string(a.size()) +
                                             " vs " + std::to_string(b.size()));
  }
  CompareReport report;
  for (std::size_t o = 0; o < a.size(); ++o) {
    if (a[o].type() != b[o].type()) {
      throw Error(ErrorKind::TypeMismatch, "output " + std::to_string(o) + ": " +
                                               a[o].type().to_string() + " vs " +
                                               b[o].type().to_string());
    }
    auto note = [&](std::int64_t i, double err) {
      if (report.output < 0 || err > report.max_rel_err) {
        report.output = static_cast<int>(o);
        report.index = i;
        report.max_rel_err = err;
      }
    };
    if (a[o].dtype == DType::I32) {
      for (std::size_t i = 0; i < a[o].i32.size(); ++i) {
        if (a[o].i32[i] != b[o].i32[i]) {
          note(static_cast<std::int64_t>(i), HUGE_VAL);
          report.ok = false;
        }
      }
      continue;
    }
    for (std::size_t i = 0; i < a[o].f32.size(); ++i) {
      const float x = a[o].f32[i], y = b[o].f32[i];
      if (std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y)) continue;
      double err;
      if (std::isnan(x) || std::isnan(y) || std::isinf(x) || std::isinf(y)) {
        err = HUGE_VAL;
      } else {
        const double scale = std::max(std::fabs(double{x}), std::fabs(double{y}));
        err = scale == 0.0 ? 0.0 : std::fabs(double{x} - double{y}) / scale;
      }
      if (tolerance == 0.0 || err > tolerance) report.ok = false;
      note(static_cast<std::int64_t>(i), err);
    }
  }
  if (!report.ok) {
    std::ostringstream os;
    os << "mismatch at output " << report.output << " element " << report.index
       << " (max rel err " << report.max_rel_err << ")";
    report.message = os.str();
  }
  return report;
}

}  // namespace fjc::exec
