#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fjc/error.hpp"

namespace fjc::ir {

// ---------------------------------------------------------------------------
// Types and operands

enum class ValueKind : std::uint8_t { F32, I64, Buf };

/// Register or parameter type. Buffers are f32 with a static shape and are
/// always indexed linearly.
struct ValueType {
  ValueKind kind = ValueKind::F32;
  std::vector<std::int64_t> shape;  // Buf only

  static ValueType f32() { return {ValueKind::F32, {}}; }
  static ValueType i64() { return {ValueKind::I64, {}}; }
  static ValueType buf(std::vector<std::int64_t> shape) { return {ValueKind::Buf, std::move(shape)}; }

  bool is_buf() const { return kind == ValueKind::Buf; }
  std::int64_t extent() const;
  std::string to_string() const;

  friend bool operator==(const ValueType&, const ValueType&) = default;
};

struct Operand {
  enum class Kind : std::uint8_t { Reg, Int, Float };
  Kind kind = Kind::Int;
  int reg = -1;
  std::int64_t i = 0;
  float f = 0.0f;

  static Operand r(int reg) { return {Kind::Reg, reg, 0, 0.0f}; }
  static Operand imm(std::int64_t v) { return {Kind::Int, -1, v, 0.0f}; }
  static Operand immf(float v) { return {Kind::Float, -1, 0, v}; }

  bool is_reg() const { return kind == Kind::Reg; }
  bool is_imm() const { return kind != Kind::Reg; }
  /// Bitwise equality for float immediates.
  bool operator==(const Operand& o) const;
};

// ---------------------------------------------------------------------------
// Instructions

enum class Op : std::uint8_t {
  // f32 arithmetic
  FAdd, FSub, FMul, FDiv, FMax, FNeg, FExp, FTanh, FSigmoid, FFma, FMov,
  // i64 index arithmetic
  IAdd, ISub, IMul, IDiv, IRem, IMin, IMax, ILt, IEq, IMov,
  // i64 -> f32 conversion
  IToF,
  // memory and calls
  Load, Store, Alloc, ConstBuf, Call,
  // control
  Br, CBr, Ret, Yield, Detach, Reattach, Sync,
  // loops with a nested body region
  PFor, For,
};

std::string_view to_string(Op op);
std::optional<Op> parse_op(std::string_view name);

bool is_terminator(Op op);
bool is_float_arith(Op op);
bool is_index_arith(Op op);
/// Operand count of arithmetic ops.
int arith_arity(Op op);
/// No side effects beyond defining `dst`.
bool is_pure(Op op);

struct Region;

/// Set on the outer chunk loop produced by strip-mining.
struct StripInfo {
  std::int64_t grain = 0;  // iterations per chunk
  std::int64_t trip = 0;   // trip count of the original loop

  friend bool operator==(const StripInfo&, const StripInfo&) = default;
};

struct Instr {
  Op op = Op::Sync;
  int dst = -1;                 // defined register (arith, load, alloc, constbuf, loop IV)
  std::vector<Operand> args;    // arith operands; load {buf, idx}; store {buf, idx, val};
                                // call args; cbr {cond}; loops {lo, hi}
  std::vector<int> targets;     // br {t}; cbr {t, f}; detach {body, cont}; reattach {cont}
  std::string callee;           // call
  std::vector<float> payload;   // constbuf
  std::vector<Region> body;     // loops: exactly one region
  std::int64_t grain = 0;       // pfor: 0 = unset
  std::optional<StripInfo> strip;

  bool is_loop() const { return op == Op::PFor || op == Op::For; }
  Region& region() { return body.front(); }
  const Region& region() const { return body.front(); }
};

struct Block {
  std::vector<Instr> instrs;
  const Instr& terminator() const { return instrs.back(); }
};

/// Ordered blocks; block 0 is the entry. Branch targets index into `blocks`.
struct Region {
  std::vector<Block> blocks;
};

struct Register {
  std::string name;
  ValueType type;
};

struct Param {
  int reg = -1;
  bool out = false;
};

struct FjFunction {
  std::string name;
  std::vector<Register> regs;
  std::vector<Param> params;
  Region body;
  bool declared = false;          // external declaration, no body
  bool inline_candidate = false;
  bool opaque = false;
  std::optional<std::int64_t> cost;  // precomputed work estimate

  int add_reg(std::string name, ValueType type);
  const ValueType& type_of(int reg) const { return regs.at(static_cast<std::size_t>(reg)).type; }
  bool is_param(int reg) const;
};

struct FjModule {
  std::map<std::string, FjFunction> functions;
  std::string entry;

  const FjFunction& function(const std::string& name) const;
  FjFunction& function(const std::string& name);
  bool contains(const std::string& name) const { return functions.count(name) != 0; }
  void add(FjFunction fn);  // throws DuplicateSymbol
};

// ---------------------------------------------------------------------------
// Traversal

/// Visits every instruction (pre-order, nested regions after their loop).
void for_each_instr(const Region& region, const std::function<void(const Instr&)>& fn);
void for_each_instr(Region& region, const std::function<void(Instr&)>& fn);

// ---------------------------------------------------------------------------
// Verification, elision, metrics

struct FjDiagnostic {
  std::string function;
  std::string block;  // path such as "^bb2" or "^bb0/pfor@3/^bb1"
  std::string rule;
  std::string message;
};

std::vector<FjDiagnostic> verify(const FjModule& module);
/// Throws VerifyError listing every diagnostic.
void verify_or_throw(const FjModule& module);

/// Serial projection: detach/reattach become branches, sync disappears, pfor
/// becomes a serial loop. Throws VerifyError on malformed input.
FjModule serial_elision(const FjModule& module);
/// In-place serial projection of one region and everything nested in it.
void elide_region(Region& region);

struct ConstructCounts {
  std::int64_t detaches = 0;
  std::int64_t reattaches = 0;
  std::int64_t pfors = 0;
  std::int64_t fors = 0;
  std::int64_t syncs = 0;
  std::int64_t calls = 0;
  std::int64_t allocs = 0;
  std::int64_t instrs = 0;

  friend bool operator==(const ConstructCounts&, const ConstructCounts&) = default;
};

ConstructCounts count_constructs(const FjFunction& fn);
ConstructCounts count_constructs(const FjModule& module);

// ---------------------------------------------------------------------------
// Text format

/// Parses and verifies. Throws ParseError or VerifyError.
FjModule parse_fj_text(std::string_view text);
/// Parses without running the verifier.
FjModule parse_fj_text_unverified(std::string_view text);
std::string print_fj_text(const FjModule& module);
std::string print_fj_function(const FjFunction& fn);

/// Copy with registers renamed %0, %1, ... in order of first appearance.
FjFunction canonicalize(const FjFunction& fn);
/// Hash of the canonical text; equal for functions that differ only in
/// register names.
std::uint64_t structural_hash(const FjFunction& fn);
bool isomorphic(const FjFunction& a, const FjFunction& b);

// ---------------------------------------------------------------------------
// Construction

/// Emits instructions into a function at a movable insertion point. Loop
/// helpers run a callback with the insertion point inside the new body and
/// restore it afterwards.
class FunctionBuilder {
 public:
  explicit FunctionBuilder(std::string name);
  explicit FunctionBuilder(FjFunction fn);  // continue appending to the entry region

  int param(std::string name, ValueType type, bool out = false);
  int reg(std::string hint, ValueType type);

  // Arithmetic returning a fresh register.
  int arith(Op op, std::vector<Operand> args, std::string hint = "t");
  // Arithmetic into an existing register.
  void assign(Op op, int dst, std::vector<Operand> args);

  int load(int buf, Operand index, std::string hint = "v");
  void store(int buf, Operand index, Operand value);
  int alloc(ValueType type, std::string hint = "tmp");
  int constbuf(ValueType type, std::vector<float> payload, std::string hint = "k");
  void call(std::string callee, std::vector<Operand> args);
  void sync();
  void ret();

  /// Emits a loop; `body(iv)` fills the body, which is closed with `yield`.
  void pfor(Operand lo, Operand hi, const std::function<void(int)>& body,
            std::int64_t grain = 0, std::string iv_hint = "i");
  void for_(Operand lo, Operand hi, const std::function<void(int)>& body,
            std::string iv_hint = "i");

  /// Emits `detach ^body, ^cont`: fills the detached block via `body`
  /// (which must leave the insertion point in a block that is closed with
  /// `reattach`), then continues in the continuation block.
  void detach(const std::function<void()>& body);

  /// Raw access for passes that build CFG shapes directly.
  int new_block();
  void set_block(int block);
  int current_block() const { return block_; }
  void emit(Instr instr);

  FjFunction& function() { return fn_; }
  FjFunction finish() &&;

 private:
  void emit_loop(Op op, Operand lo, Operand hi, const std::function<void(int)>& body,
                 std::int64_t grain, std::string iv_hint);
  Region& region();

  FjFunction fn_;
  std::vector<Region*> region_stack_;
  std::set<std::string> names_;
  std::map<std::string, int> counters_;
  int block_ = 0;
};

}  // namespace fjc::ir
