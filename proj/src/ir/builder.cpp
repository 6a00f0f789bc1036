#include "fjc/ir/fj.hpp"

namespace fjc::ir {

FunctionBuilder::FunctionBuilder(std::string name) {
  fn_.name = std::move(name);
  fn_.body.blocks.emplace_back();
  region_stack_.push_back(&fn_.body);
}

FunctionBuilder::FunctionBuilder(FjFunction fn) : fn_(std::move(fn)) {
  if (fn_.body.blocks.empty()) fn_.body.blocks.emplace_back();
  for (const auto& r : fn_.regs) names_.insert(r.name);
  region_stack_.push_back(&fn_.body);
  block_ = static_cast<int>(fn_.body.blocks.size()) - 1;
}

Region& FunctionBuilder::region() { return *region_stack_.back(); }

int FunctionBuilder::param(std::string name, ValueType type, bool out) {
  const int r = reg(std::move(name), std::move(type));
  fn_.params.push_back(Param{r, out});
  return r;
}

int FunctionBuilder::reg(std::string hint, ValueType type) {
  std::string name = hint;
  if (names_.count(name)) {
    int& n = counters_[hint];
    do {
      name = hint + std::to_string(++n);
    } while (names_.count(name));
  }
  names_.insert(name);
  return fn_.add_reg(std::move(name), std::move(type));
}

void FunctionBuilder::emit(Instr instr) {
  region().blocks[static_cast<std::size_t>(block_)].instrs.push_back(std::move(instr));
}

int FunctionBuilder::arith(Op op, std::vector<Operand> args, std::string hint) {
  const int dst = reg(std::move(hint), is_index_arith(op) ? ValueType::i64() : ValueType::f32());
  assign(op, dst, std::move(args));
  return dst;
}

void FunctionBuilder::assign(Op op, int dst, std::vector<Operand> args) {
  Instr in;
  in.op = op;
  in.dst = dst;
  in.args = std::move(args);
  emit(std::move(in));
}

int FunctionBuilder::load(int buf, Operand index, std::string hint) {
  const int dst = reg(std::move(hint), ValueType::f32());
  Instr in;
  in.op = Op::Load;
  in.dst = dst;
  in.args = {Operand::r(buf), index};
  emit(std::move(in));
  return dst;
}

void FunctionBuilder::store(int buf, Operand index, Operand value) {
  Instr in;
  in.op = Op::Store;
  in.args = {Operand::r(buf), index, value};
  emit(std::move(in));
}

int FunctionBuilder::alloc(ValueType type, std::string hint) {
  const int dst = reg(std::move(hint), std::move(type));
  Instr in;
  in.op = Op::Alloc;
  in.dst = dst;
  emit(std::move(in));
  return dst;
}

int FunctionBuilder::constbuf(ValueType type, std::vector<float> payload, std::string hint) {
  const int dst = reg(std::move(hint), std::move(type));
  Instr in;
  in.op = Op::ConstBuf;
  in.dst = dst;
  in.payload = std::move(payload);
  emit(std::move(in));
  return dst;
}

void FunctionBuilder::call(std::string callee, std::vector<Operand> args) {
  Instr in;
  in.op = Op::Call;
  in.callee = std::move(callee);
  in.args = std::move(args);
  emit(std::move(in));
}

void FunctionBuilder::sync() {
  Instr in;
  in.op = Op::Sync;
  emit(std::move(in));
}

void FunctionBuilder::ret() {
  Instr in;
  in.op = Op::Ret;
  emit(std::move(in));
}

void FunctionBuilder::emit_loop(Op op, Operand lo, Operand hi, const std::function<void(int)>& body,
                                std::int64_t grain, std::string iv_hint) {
  const int iv = reg(std::move(iv_hint), ValueType::i64());
  Region inner;
  inner.blocks.emplace_back();
  const int saved_block = block_;
  region_stack_.push_back(&inner);
  block_ = 0;
  body(iv);
  Instr yield;
  yield.op = Op::Yield;
  emit(std::move(yield));
  region_stack_.pop_back();
  block_ = saved_block;

  Instr loop;
  loop.op = op;
  loop.dst = iv;
  loop.args = {lo, hi};
  loop.grain = grain;
  loop.body.push_back(std::move(inner));
  emit(std::move(loop));
}

void FunctionBuilder::pfor(Operand lo, Operand hi, const std::function<void(int)>& body,
                           std::int64_t grain, std::string iv_hint) {
  emit_loop(Op::PFor, lo, hi, body, grain, std::move(iv_hint));
}

void FunctionBuilder::for_(Operand lo, Operand hi, const std::function<void(int)>& body,
                           std::string iv_hint) {
  emit_loop(Op::For, lo, hi, body, 0, std::move(iv_hint));
}

void FunctionBuilder::detach(const std::function<void()>& body) {
  const int task = new_block();
  const int cont = new_block();
  Instr d;
  d.op = Op::Detach;
  d.targets = {task, cont};
  emit(std::move(d));
  set_block(task);
  body();
  Instr r;
  r.op = Op::Reattach;
  r.targets = {cont};
  emit(std::move(r));
  set_block(cont);
}

int FunctionBuilder::new_block() {
  region().blocks.emplace_back();
  return static_cast<int>(region().blocks.size()) - 1;
}

void FunctionBuilder::set_block(int block) { block_ = block; }

FjFunction FunctionBuilder::finish() && { return std::move(fn_); }

}  // namespace fjc::ir
