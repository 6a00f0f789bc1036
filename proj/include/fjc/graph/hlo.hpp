#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fjc/error.hpp"
#include "fjc/reduction_order.hpp"

namespace fjc::graph {

inline constexpr int kMaxRank = 4;

enum class DType : std::uint8_t { F32, I32 };

std::string_view to_string(DType dtype);

/// Static type of every graph value: element type plus row-major shape.
struct TensorType {
  DType dtype = DType::F32;
  std::vector<std::int64_t> shape;

  int rank() const { return static_cast<int>(shape.size()); }
  std::int64_t element_count() const;
  std::string to_string() const;

  friend bool operator==(const TensorType&, const TensorType&) = default;
};

TensorType f32(std::vector<std::int64_t> shape);

enum class OpKind : std::uint8_t {
  Parameter,
  Constant,
  Neg,
  Exp,
  Tanh,
  Sigmoid,
  Relu,
  Add,
  Sub,
  Mul,
  Div,
  Max,
  Broadcast,
  Reshape,
  Transpose,
  Reduce,
  MatMul,
  Conv2D,
  Concat,
  Slice,
  Fused,
};

std::string_view to_string(OpKind kind);
std::optional<OpKind> parse_op_kind(std::string_view name);

bool is_unary_elementwise(OpKind kind);
bool is_binary_elementwise(OpKind kind);
inline bool is_elementwise(OpKind kind) {
  return is_unary_elementwise(kind) || is_binary_elementwise(kind);
}
/// Operand count required by `kind`, or -1 when variadic (Concat, Fused).
int arity(OpKind kind);

/// Operand reference inside a fused region: either the fused node's k-th
/// operand or an earlier member of the region.
struct FusedOperand {
  bool external = true;
  int index = 0;

  friend bool operator==(const FusedOperand&, const FusedOperand&) = default;
};

struct FusedMember {
  int id = 0;  // id the member had before fusion
  OpKind kind = OpKind::Add;
  std::vector<FusedOperand> operands;

  friend bool operator==(const FusedMember&, const FusedMember&) = default;
};

/// A single-exit elementwise region collapsed into one Fused node. Members are
/// in evaluation order; the last member is the root.
struct FusedRegion {
  std::vector<FusedMember> members;
  TensorType fused_type;

  int root() const { return members.empty() ? -1 : members.back().id; }

  friend bool operator==(const FusedRegion&, const FusedRegion&) = default;
};

/// Kind-specific attributes. Fields not used by a kind stay at their defaults
/// so attrs compare equal exactly when they mean the same thing.
struct Attrs {
  std::vector<float> f32_values;      // Constant (F32)
  std::vector<std::int32_t> i32_values;  // Constant (I32)
  std::int64_t axis = 0;              // Reduce, Concat, Slice
  ReduceOp reduce_op = ReduceOp::Sum;  // Reduce
  std::int64_t stride = 1;            // Conv2D
  std::vector<std::int64_t> dims;     // Broadcast: operand dim -> target dim; Transpose: perm
  std::vector<std::int64_t> shape;    // Broadcast, Reshape: target shape
  std::int64_t start = 0;             // Slice
  std::int64_t size = 0;              // Slice
  std::int64_t param_index = -1;      // Parameter (position in the parameter list)
  DType dtype = DType::F32;           // Parameter, Constant
  std::shared_ptr<const FusedRegion> region;  // Fused

  bool operator==(const Attrs& other) const;
};

struct HloNode {
  int id = 0;
  OpKind kind = OpKind::Parameter;
  std::vector<int> operands;
  TensorType type;
  Attrs attrs;
};

/// Data-flow graph of tensor operations. Node ids are stable across passes;
/// passes may leave gaps.
class HloGraph {
 public:
  const std::map<int, HloNode>& nodes() const { return nodes_; }
  const std::vector<int>& parameters() const { return parameters_; }
  const std::vector<int>& outputs() const { return outputs_; }

  const HloNode& node(int id) const;
  const HloNode* find(int id) const;
  bool contains(int id) const { return nodes_.count(id) != 0; }
  std::size_t size() const { return nodes_.size(); }
  int next_id() const { return nodes_.empty() ? 0 : nodes_.rbegin()->first + 1; }

  /// Inserts a node verbatim (no shape inference); replaces any node with the
  /// same id. Parameters are appended to the parameter list.
  void insert(HloNode node);
  void erase(int id);
  void set_outputs(std::vector<int> outputs) { outputs_ = std::move(outputs); }
  void set_parameters(std::vector<int> params) { parameters_ = std::move(params); }
  HloNode& mutable_node(int id);

  /// Structural equality: same ids, kinds, operands, types, attrs, parameter
  /// and output lists.
  bool operator==(const HloGraph& other) const;

 private:
  std::map<int, HloNode> nodes_;
  std::vector<int> parameters_;
  std::vector<int> outputs_;
};

// ---------------------------------------------------------------------------
// Shape inference

/// Result type of `kind` applied to `operands` with `attrs`.
/// Throws Error{ShapeMismatch | UnsupportedRank | InvalidAttribute}.
TensorType infer_shape(OpKind kind, std::span<const TensorType> operands,
                       const Attrs& attrs);

// ---------------------------------------------------------------------------
// Validation

struct Diagnostic {
  int node = -1;
  std::string rule;
  std::string message;
};

std::vector<Diagnostic> validate(const HloGraph& graph);
/// Throws Error{ValidationError} listing every diagnostic.
void validate_or_throw(const HloGraph& graph);

/// Operands before users; ties broken by ascending id. Throws CycleError.
std::vector<int> topo_order(const HloGraph& graph);

/// Users of every node, in ascending user id (a user appears once per use).
std::map<int, std::vector<int>> users_of(const HloGraph& graph);

// ---------------------------------------------------------------------------
// Text format

HloGraph parse_hlo_text(std::string_view text);
std::string print_hlo_text(const HloGraph& graph);

/// True when both graphs have the same structure up to a renaming of node ids
/// (kinds, attrs, types, operand structure, parameter and output order).
bool isomorphic(const HloGraph& a, const HloGraph& b);

// ---------------------------------------------------------------------------
// Construction

/// Appends nodes with dense ascending ids, inferring each result type.
class GraphBuilder {
 public:
  int parameter(TensorType type);
  int constant(TensorType type, std::vector<float> values);
  int constant_i32(TensorType type, std::vector<std::int32_t> values);
  int scalar(float value) { return constant(f32({}), {value}); }

  int unary(OpKind kind, int x);
  int binary(OpKind kind, int a, int b);
  int neg(int x) { return unary(OpKind::Neg, x); }
  int exp(int x) { return unary(OpKind::Exp, x); }
  int tanh(int x) { return unary(OpKind::Tanh, x); }
  int sigmoid(int x) { return unary(OpKind::Sigmoid, x); }
  int relu(int x) { return unary(OpKind::Relu, x); }
  int add(int a, int b) { return binary(OpKind::Add, a, b); }
  int sub(int a, int b) { return binary(OpKind::Sub, a, b); }
  int mul(int a, int b) { return binary(OpKind::Mul, a, b); }
  int div(int a, int b) { return binary(OpKind::Div, a, b); }
  int max(int a, int b) { return binary(OpKind::Max, a, b); }

  int broadcast(int x, std::vector<std::int64_t> shape, std::vector<std::int64_t> dims);
  int reshape(int x, std::vector<std::int64_t> shape);
  int transpose(int x, std::vector<std::int64_t> perm);
  int reduce(int x, ReduceOp op, std::int64_t axis);
  int matmul(int a, int b);
  int conv2d(int input, int filter, std::int64_t stride);
  int concat(std::vector<int> operands, std::int64_t axis);
  int slice(int x, std::int64_t axis, std::int64_t start, std::int64_t size);

  /// Generic append used by parsers and test generators.
  int add_node(OpKind kind, std::vector<int> operands, Attrs attrs);

  const TensorType& type_of(int id) const { return graph_.node(id).type; }
  void set_outputs(std::vector<int> outputs) { graph_.set_outputs(std::move(outputs)); }
  const HloGraph& graph() const { return graph_; }
  HloGraph finish() &&;

 private:
  HloGraph graph_;
};

}  // namespace fjc::graph
