#include "fjc/graph/hlo.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <sstream>

namespace fjc {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::UnsupportedRank: return "UnsupportedRank";
    case ErrorKind::InvalidAttribute: return "InvalidAttribute";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::CycleError: return "CycleError";
    case ErrorKind::VerifyError: return "VerifyError";
    case ErrorKind::UnsupportedOp: return "UnsupportedOp";
    case ErrorKind::KernelMissing: return "KernelMissing";
    case ErrorKind::DuplicateSymbol: return "DuplicateSymbol";
    case ErrorKind::RecursionDetected: return "RecursionDetected";
    case ErrorKind::FixpointNotReached: return "FixpointNotReached";
    case ErrorKind::InputMismatch: return "InputMismatch";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::TypeMismatch: return "TypeMismatch";
    case ErrorKind::ResourceExhausted: return "ResourceExhausted";
    case ErrorKind::IoError: return "IoError";
  }
  return "Error";
}

}  // namespace fjc

namespace fjc::graph {

namespace {

struct KindInfo {
  OpKind kind;
  std::string_view name;
  int arity;
};

constexpr std::array<KindInfo, 21> kKinds{{
    {OpKind::Parameter, "parameter", 0},
    {OpKind::Constant, "constant", 0},
    {OpKind::Neg, "neg", 1},
    {OpKind::Exp, "exp", 1},
    {OpKind::Tanh, "tanh", 1},
    {OpKind::Sigmoid, "sigmoid", 1},
    {OpKind::Relu, "relu", 1},
    {OpKind::Add, "add", 2},
    {OpKind::Sub, "sub", 2},
    {OpKind::Mul, "mul", 2},
    {OpKind::Div, "div", 2},
    {OpKind::Max, "max", 2},
    {OpKind::Broadcast, "broadcast", 1},
    {OpKind::Reshape, "reshape", 1},
    {OpKind::Transpose, "transpose", 1},
    {OpKind::Reduce, "reduce", 1},
    {OpKind::MatMul, "matmul", 2},
    {OpKind::Conv2D, "conv2d", 2},
    {OpKind::Concat, "concat", -1},
    {OpKind::Slice, "slice", 1},
    {OpKind::Fused, "fused", -1},
}};

}  // namespace

std::string_view to_string(DType dtype) { return dtype == DType::F32 ? "f32" : "i32"; }

std::int64_t TensorType::element_count() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string TensorType::to_string() const {
  std::ostringstream os;
  os << graph::to_string(dtype) << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

TensorType f32(std::vector<std::int64_t> shape) { return TensorType{DType::F32, std::move(shape)}; }

std::string_view to_string(OpKind kind) {
  return kKinds[static_cast<std::size_t>(kind)].name;
}

std::optional<OpKind> parse_op_kind(std::string_view name) {
  for (const auto& info : kKinds) {
    if (info.name == name) return info.kind;
  }
  return std::nullopt;
}

int arity(OpKind kind) { return kKinds[static_cast<std::size_t>(kind)].arity; }

bool is_unary_elementwise(OpKind kind) {
  switch (kind) {
    case OpKind::Neg:
    case OpKind::Exp:
    case OpKind::Tanh:
    case OpKind::Sigmoid:
    case OpKind::Relu:
      return true;
    default:
      return false;
  }
}

bool is_binary_elementwise(OpKind kind) {
  switch (kind) {
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div:
    case OpKind::Max:
      return true;
    default:
      return false;
  }
}

bool Attrs::operator==(const Attrs& other) const {
  // Compare payload bit patterns so NaN constants and signed zeros are
  // distinguished exactly.
  if (f32_values.size() != other.f32_values.size()) return false;
  if (!f32_values.empty() &&
      std::memcmp(f32_values.data(), other.f32_values.data(),
                  f32_values.size() * sizeof(float)) != 0) {
    return false;
  }
  if (i32_values != other.i32_values || axis != other.axis ||
      reduce_op != other.reduce_op || stride != other.stride || dims != other.dims ||
      shape != other.shape || start != other.start || size != other.size ||
      param_index != other.param_index || dtype != other.dtype) {
    return false;
  }
  if (static_cast<bool>(region) != static_cast<bool>(other.region)) return false;
  return !region || *region == *other.region;
}

const HloNode& HloGraph::node(int id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) {
    throw Error(ErrorKind::ValidationError, "no node %" + std::to_string(id));
  }
  return it->second;
}

const HloNode* HloGraph::find(int id) const {
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

HloNode& HloGraph::mutable_node(int id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) {
    throw Error(ErrorKind::ValidationError, "no node %" + std::to_string(id));
  }
  return it->second;
}

void HloGraph::insert(HloNode node) {
  const int id = node.id;
  const bool is_param = node.kind == OpKind::Parameter;
  nodes_[id] = std::move(node);
  if (is_param && std::find(parameters_.begin(), parameters_.end(), id) == parameters_.end()) {
    parameters_.push_back(id);
  }
}

void HloGraph::erase(int id) {
  nodes_.erase(id);
  std::erase(parameters_, id);
}

bool HloGraph::operator==(const HloGraph& other) const {
  if (parameters_ != other.parameters_ || outputs_ != other.outputs_) return false;
  if (nodes_.size() != other.nodes_.size()) return false;
  for (auto a = nodes_.begin(), b = other.nodes_.begin(); a != nodes_.end(); ++a, ++b) {
    const HloNode& x = a->second;
    const HloNode& y = b->second;
    if (x.id != y.id || x.kind != y.kind || x.operands != y.operands || x.type != y.type ||
        !(x.attrs == y.attrs)) {
      return false;
    }
  }
  return true;
}

std::map<int, std::vector<int>> users_of(const HloGraph& graph) {
  std::map<int, std::vector<int>> users;
  for (const auto& [id, node] : graph.nodes()) {
    users[id];
    for (int op : node.operands) users[op].push_back(id);
  }
  return users;
}

// ---------------------------------------------------------------------------
// GraphBuilder

int GraphBuilder::add_node(OpKind kind, std::vector<int> operands, Attrs attrs) {
  std::vector<TensorType> types;
  types.reserve(operands.size());
  for (int op : operands) types.push_back(graph_.node(op).type);
  HloNode node;
  node.id = graph_.next_id();
  node.kind = kind;
  node.type = infer_shape(kind, types, attrs);
  node.operands = std::move(operands);
  node.attrs = std::move(attrs);
  const int id = node.id;
  graph_.insert(std::move(node));
  return id;
}

int GraphBuilder::parameter(TensorType type) {
  Attrs attrs;
  attrs.param_index = static_cast<std::int64_t>(graph_.parameters().size());
  attrs.shape = type.shape;
  attrs.dtype = type.dtype;
  HloNode node;
  node.id = graph_.next_id();
  node.kind = OpKind::Parameter;
  node.type = std::move(type);
  node.attrs = std::move(attrs);
  const int id = node.id;
  (void)infer_shape(OpKind::Parameter, {}, node.attrs);
  if (node.type.rank() > kMaxRank) {
    throw Error(ErrorKind::UnsupportedRank, "parameter rank " + std::to_string(node.type.rank()));
  }
  graph_.insert(std::move(node));
  return id;
}

int GraphBuilder::constant(TensorType type, std::vector<float> values) {
  if (type.dtype != DType::F32) {
    throw Error(ErrorKind::InvalidAttribute, "f32 payload for non-f32 constant");
  }
  Attrs attrs;
  attrs.shape = type.shape;
  attrs.dtype = DType::F32;
  attrs.f32_values = std::move(values);
  return add_node(OpKind::Constant, {}, std::move(attrs));
}

int GraphBuilder::constant_i32(TensorType type, std::vector<std::int32_t> values) {
  Attrs attrs;
  attrs.shape = type.shape;
  attrs.i32_values = std::move(values);
  attrs.dtype = DType::I32;
  if (type.dtype != DType::I32) {
    throw Error(ErrorKind::InvalidAttribute, "i32 payload for non-i32 constant");
  }
  return add_node(OpKind::Constant, {}, std::move(attrs));
}

int GraphBuilder::unary(OpKind kind, int x) { return add_node(kind, {x}, {}); }
int GraphBuilder::binary(OpKind kind, int a, int b) { return add_node(kind, {a, b}, {}); }

int GraphBuilder::broadcast(int x, std::vector<std::int64_t> shape, std::vector<std::int64_t> dims) {
  Attrs attrs;
  attrs.shape = std::move(shape);
  attrs.dims = std::move(dims);
  return add_node(OpKind::Broadcast, {x}, std::move(attrs));
}

int GraphBuilder::reshape(int x, std::vector<std::int64_t> shape) {
  Attrs attrs;
  attrs.shape = std::move(shape);
  return add_node(OpKind::Reshape, {x}, std::move(attrs));
}

int GraphBuilder::transpose(int x, std::vector<std::int64_t> perm) {
  Attrs attrs;
  attrs.dims = std::move(perm);
  return add_node(OpKind::Transpose, {x}, std::move(attrs));
}

int GraphBuilder::reduce(int x, ReduceOp op, std::int64_t axis) {
  Attrs attrs;
  attrs.reduce_op = op;
  attrs.axis = axis;
  return add_node(OpKind::Reduce, {x}, std::move(attrs));
}

int GraphBuilder::matmul(int a, int b) { return add_node(OpKind::MatMul, {a, b}, {}); }

int GraphBuilder::conv2d(int input, int filter, std::int64_t stride) {
  Attrs attrs;
  attrs.stride = stride;
  return add_node(OpKind::Conv2D, {input, filter}, std::move(attrs));
}

int GraphBuilder::concat(std::vector<int> operands, std::int64_t axis) {
  Attrs attrs;
  attrs.axis = axis;
  return add_node(OpKind::Concat, std::move(operands), std::move(attrs));
}

int GraphBuilder::slice(int x, std::int64_t axis, std::int64_t start, std::int64_t size) {
  Attrs attrs;
  attrs.axis = axis;
  attrs.start = start;
  attrs.size = size;
  return add_node(OpKind::Slice, {x}, std::move(attrs));
}

HloGraph GraphBuilder::finish() && { return std::move(graph_); }

}  // namespace fjc::graph
