#pragma once

#include <cstdint>

#include "fjc/ir/fj.hpp"

namespace fjc::testing {

// pfor over [0, n) whose body costs exactly 10 units:
// load(2) + 5 arith + itof(1) + store(2)
inline ir::FjModule ten_unit_loop(std::int64_t n) {
  ir::FunctionBuilder b("main");
  const int x = b.param("x", ir::ValueType::buf({n}));
  const int y = b.param("y", ir::ValueType::buf({n}), true);
  b.pfor(ir::Operand::imm(0), ir::Operand::imm(n), [&](int i) {
    int v = b.load(x, ir::Operand::r(i));
    const int f = b.arith(ir::Op::IToF, {ir::Operand::r(i)});
    v = b.arith(ir::Op::FAdd, {ir::Operand::r(v), ir::Operand::r(f)});
    for (int k = 0; k < 4; ++k) v = b.arith(ir::Op::FMul, {ir::Operand::r(v), ir::Operand::immf(0.5f)});
    b.store(y, ir::Operand::r(i), ir::Operand::r(v));
  });
  b.ret();
  ir::FjModule m;
  m.entry = "main";
  m.add(std::move(b).finish());
  return m;
}

}  // namespace fjc::testing
