#include <algorithm>
#include <sstream>

#include "fjc/graph/hlo.hpp"

namespace fjc::graph {

namespace {

[[noreturn]] void mismatch(OpKind kind, const std::string& why) {
  throw Error(ErrorKind::ShapeMismatch, std::string(to_string(kind)) + ": " + why);
}

[[noreturn]] void bad_attr(OpKind kind, const std::string& why) {
  throw Error(ErrorKind::InvalidAttribute, std::string(to_string(kind)) + ": " + why);
}

void check_rank(const std::vector<std::int64_t>& shape) {
  if (shape.size() > static_cast<std::size_t>(kMaxRank)) {
    throw Error(ErrorKind::UnsupportedRank, "rank " + std::to_string(shape.size()) + " exceeds " +
                                                std::to_string(kMaxRank));
  }
  for (auto d : shape) {
    if (d < 0) throw Error(ErrorKind::ShapeMismatch, "negative extent");
  }
}

void expect_arity(OpKind kind, std::span<const TensorType> operands) {
  const int want = arity(kind);
  if (want >= 0 && static_cast<int>(operands.size()) != want) {
    mismatch(kind, "expected " + std::to_string(want) + " operands, got " +
                       std::to_string(operands.size()));
  }
}

void expect_f32(OpKind kind, const TensorType& t) {
  if (t.dtype != DType::F32) mismatch(kind, "operand must be f32, got " + t.to_string());
}

std::string shapes(std::span<const TensorType> ts) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ts.size(); ++i) os << (i ? ", " : "") << ts[i].to_string();
  return os.str();
}

TensorType infer_fused(std::span<const TensorType> operands, const Attrs& attrs) {
  if (!attrs.region || attrs.region->members.empty()) bad_attr(OpKind::Fused, "empty region");
  const FusedRegion& region = *attrs.region;
  const TensorType& ft = region.fused_type;
  check_rank(ft.shape);
  if (ft.dtype != DType::F32) mismatch(OpKind::Fused, "fused type must be f32");
  std::vector<bool> used(operands.size(), false);
  for (std::size_t m = 0; m < region.members.size(); ++m) {
    const FusedMember& member = region.members[m];
    const bool bcast = member.kind == OpKind::Broadcast;
    if (!is_elementwise(member.kind) && !bcast) {
      bad_attr(OpKind::Fused, "member kind " + std::string(to_string(member.kind)) + " not fusible");
    }
    const int want = bcast ? 1 : arity(member.kind);
    if (static_cast<int>(member.operands.size()) != want) {
      bad_attr(OpKind::Fused, "member %" + std::to_string(member.id) + " arity");
    }
    for (const FusedOperand& op : member.operands) {
      if (op.external) {
        if (op.index < 0 || static_cast<std::size_t>(op.index) >= operands.size()) {
          bad_attr(OpKind::Fused, "external operand $" + std::to_string(op.index) + " out of range");
        }
        used[static_cast<std::size_t>(op.index)] = true;
        const TensorType& t = operands[static_cast<std::size_t>(op.index)];
        if (bcast) {
          if (t.dtype != DType::F32 || t.rank() != 0) {
            mismatch(OpKind::Fused, "fused broadcast operand must be an f32 scalar");
          }
        } else if (t != ft) {
          mismatch(OpKind::Fused, "operand " + t.to_string() + " vs fused " + ft.to_string());
        }
      } else {
        if (op.index < 0 || static_cast<std::size_t>(op.index) >= m) {
          bad_attr(OpKind::Fused, "member operand must refer to an earlier member");
        }
        if (bcast) bad_attr(OpKind::Fused, "fused broadcast must read an external scalar");
      }
    }
  }
  for (std::size_t i = 0; i < used.size(); ++i) {
    if (!used[i]) bad_attr(OpKind::Fused, "operand $" + std::to_string(i) + " unused");
  }
  return ft;
}

}  // namespace

TensorType infer_shape(OpKind kind, std::span<const TensorType> operands, const Attrs& attrs) {
  for (const auto& t : operands) check_rank(t.shape);
  expect_arity(kind, operands);

  switch (kind) {
    case OpKind::Parameter:
      check_rank(attrs.shape);
      return TensorType{attrs.dtype, attrs.shape};

    case OpKind::Constant: {
      check_rank(attrs.shape);
      TensorType t{attrs.dtype, attrs.shape};
      const auto n = static_cast<std::size_t>(t.element_count());
      const std::size_t have = attrs.dtype == DType::F32 ? attrs.f32_values.size()
                                                          : attrs.i32_values.size();
      if (have != n) {
        bad_attr(kind, "payload has " + std::to_string(have) + " values, shape needs " +
                           std::to_string(n));
      }
      return t;
    }

    case OpKind::Neg:
    case OpKind::Exp:
    case OpKind::Tanh:
    case OpKind::Sigmoid:
    case OpKind::Relu:
      expect_f32(kind, operands[0]);
      return operands[0];

    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div:
    case OpKind::Max:
      expect_f32(kind, operands[0]);
      if (operands[0] != operands[1]) mismatch(kind, "operands " + shapes(operands));
      return operands[0];

    case OpKind::Broadcast: {
      const TensorType& x = operands[0];
      check_rank(attrs.shape);
      if (attrs.dims.size() != x.shape.size()) {
        bad_attr(kind, "dims must list one target dim per operand dim");
      }
      for (std::size_t k = 0; k < attrs.dims.size(); ++k) {
        const auto d = attrs.dims[k];
        if (d < 0 || d >= static_cast<std::int64_t>(attrs.shape.size())) {
          bad_attr(kind, "dim " + std::to_string(d) + " out of range");
        }
        if (k > 0 && d <= attrs.dims[k - 1]) bad_attr(kind, "dims must be increasing");
        const auto have = x.shape[k];
        if (have != attrs.shape[static_cast<std::size_t>(d)] && have != 1) {
          mismatch(kind, "operand " + x.to_string() + " cannot expand to target");
        }
      }
      return TensorType{x.dtype, attrs.shape};
    }

    case OpKind::Reshape: {
      check_rank(attrs.shape);
      TensorType t{operands[0].dtype, attrs.shape};
      if (t.element_count() != operands[0].element_count()) {
        mismatch(kind, operands[0].to_string() + " to " + t.to_string());
      }
      return t;
    }

    case OpKind::Transpose: {
      const TensorType& x = operands[0];
      if (attrs.dims.size() != x.shape.size()) bad_attr(kind, "perm length must equal rank");
      std::vector<std::int64_t> sorted = attrs.dims;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] != static_cast<std::int64_t>(i)) bad_attr(kind, "perm is not a permutation");
      }
      TensorType t{x.dtype, {}};
      for (auto p : attrs.dims) t.shape.push_back(x.shape[static_cast<std::size_t>(p)]);
      return t;
    }

    case OpKind::Reduce: {
      const TensorType& x = operands[0];
      expect_f32(kind, x);
      if (attrs.axis < 0 || attrs.axis >= x.rank()) bad_attr(kind, "axis out of range");
      TensorType t = x;
      t.shape.erase(t.shape.begin() + attrs.axis);
      return t;
    }

    case OpKind::MatMul: {
      const TensorType& a = operands[0];
      const TensorType& b = operands[1];
      expect_f32(kind, a);
      expect_f32(kind, b);
      if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0]) {
        mismatch(kind, "operands " + shapes(operands));
      }
      return f32({a.shape[0], b.shape[1]});
    }

    case OpKind::Conv2D: {
      const TensorType& in = operands[0];
      const TensorType& w = operands[1];
      expect_f32(kind, in);
      expect_f32(kind, w);
      if (attrs.stride < 1) bad_attr(kind, "stride must be >= 1");
      if (in.rank() != 4 || w.rank() != 4 || in.shape[3] != w.shape[2]) {
        mismatch(kind, "expects NHWC input and HWIO filter, got " + shapes(operands));
      }
      if (in.shape[1] < w.shape[0] || in.shape[2] < w.shape[1]) {
        mismatch(kind, "filter larger than input");
      }
      const auto oh = (in.shape[1] - w.shape[0]) / attrs.stride + 1;
      const auto ow = (in.shape[2] - w.shape[1]) / attrs.stride + 1;
      return f32({in.shape[0], oh, ow, w.shape[3]});
    }

    case OpKind::Concat: {
      if (operands.empty()) mismatch(kind, "needs at least one operand");
      const TensorType& first = operands[0];
      if (attrs.axis < 0 || attrs.axis >= first.rank()) bad_attr(kind, "axis out of range");
      TensorType t = first;
      t.shape[static_cast<std::size_t>(attrs.axis)] = 0;
      for (const auto& op : operands) {
        if (op.dtype != first.dtype || op.rank() != first.rank()) {
          mismatch(kind, "operands " + shapes(operands));
        }
        for (int d = 0; d < first.rank(); ++d) {
          if (d != attrs.axis && op.shape[static_cast<std::size_t>(d)] != first.shape[static_cast<std::size_t>(d)]) {
            mismatch(kind, "operands " + shapes(operands));
          }
        }
        t.shape[static_cast<std::size_t>(attrs.axis)] += op.shape[static_cast<std::size_t>(attrs.axis)];
      }
      return t;
    }

    case OpKind::Slice: {
      const TensorType& x = operands[0];
      if (attrs.axis < 0 || attrs.axis >= x.rank()) bad_attr(kind, "axis out of range");
      const auto extent = x.shape[static_cast<std::size_t>(attrs.axis)];
      if (attrs.start < 0 || attrs.size < 0 || attrs.start + attrs.size > extent) {
        mismatch(kind, "slice [" + std::to_string(attrs.start) + ", +" +
                           std::to_string(attrs.size) + ") outside extent " +
                           std::to_string(extent));
      }
      TensorType t = x;
      t.shape[static_cast<std::size_t>(attrs.axis)] = attrs.size;
      return t;
    }

    case OpKind::Fused:
      return infer_fused(operands, attrs);
  }
  throw Error(ErrorKind::UnsupportedOp, "unknown op kind");
}

}  // namespace fjc::graph
