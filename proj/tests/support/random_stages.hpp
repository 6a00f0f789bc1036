#pragma once

// Random multi-stage FJ programs shaped like lowered graphs: a chain of
// elementwise pfor nests over one shape, linked through allocated buffers,
// optionally fed by an inline matmul kernel, with calls to a small inline
// helper, foldable constants and a constant branch.

#include <cstdint>
#include <random>
#include <vector>

#include "fjc/ir/fj.hpp"
#include "fjc/kernels/kernels.hpp"

namespace fjc::testing {

struct StageGenOptions {
  int max_stages = 4;
  bool large = false;  // extents big enough to stay parallel after serialization
};

inline ir::FjModule random_stage_module(std::uint64_t seed, const StageGenOptions& opt = {}) {
  using namespace fjc::ir;
  std::mt19937_64 rng(seed);
  auto pick = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };

  const int rank = static_cast<int>(pick(1, 2));
  std::vector<std::int64_t> shape;
  for (int d = 0; d < rank; ++d) shape.push_back(opt.large ? pick(24, 70) : pick(1, 9));
  if (rank == 1 && opt.large) shape[0] *= 20;
  std::int64_t elems = 1;
  for (auto e : shape) elems *= e;

  FjModule m;
  m.entry = "main";

  // Inline helper: dst[i] = src[i] * c + 0.5
  FunctionBuilder hb("scale");
  {
    const int src = hb.param("src", ValueType::buf(shape));
    const int dst = hb.param("dst", ValueType::buf(shape), true);
    const int i = hb.param("i", ValueType::i64());
    const int c = hb.param("c", ValueType::f32());
    const int v = hb.load(src, Operand::r(i));
    const int w = hb.arith(Op::FMul, {Operand::r(v), Operand::r(c)});
    const int z = hb.arith(Op::FAdd, {Operand::r(w), Operand::immf(0.5f)});
    hb.store(dst, Operand::r(i), Operand::r(z));
    hb.ret();
  }
  auto helper = std::move(hb).finish();
  helper.inline_candidate = true;
  bool helper_used = false;

  FunctionBuilder b("main");
  std::vector<int> sources{b.param("x", ValueType::buf(shape)), b.param("z", ValueType::buf(shape))};
  const bool with_matmul = rank == 2 && pick(0, 1) == 1;
  int ma = -1, mb = -1;
  std::int64_t k = 0;
  if (with_matmul) {
    k = pick(1, opt.large ? 300 : 20);
    ma = b.param("a", ValueType::buf({shape[0], k}));
    mb = b.param("b", ValueType::buf({k, shape[1]}));
  }
  const int y = b.param("y", ValueType::buf(shape), true);

  const int stages = static_cast<int>(pick(1, opt.max_stages));
  std::vector<int> temps;
  for (int s = 0; s + 1 < stages; ++s) temps.push_back(b.alloc(ValueType::buf(shape), "t"));
  const int zero = b.arith(Op::IMov, {Operand::imm(0)}, "zero");
  const int two = b.arith(Op::IAdd, {Operand::imm(1), Operand::imm(1)}, "two");

  if (with_matmul) {
    const int prod = b.alloc(ValueType::buf(shape), "prod");
    auto kernel = kernels::build_matmul(shape[0], k, shape[1]);
    b.call(kernel.name, {Operand::r(ma), Operand::r(mb), Operand::r(prod)});
    m.add(std::move(kernel));
    sources.push_back(prod);
  }

  const Op unary[] = {Op::FNeg, Op::FTanh, Op::FSigmoid, Op::FMov, Op::FExp};
  const Op binary[] = {Op::FAdd, Op::FSub, Op::FMul, Op::FMax};

  auto stage = [&](int dst) {
    const int src = sources[static_cast<std::size_t>(pick(0, static_cast<std::int64_t>(sources.size()) - 1))];
    const int other = sources[static_cast<std::size_t>(pick(0, static_cast<std::int64_t>(sources.size()) - 1))];
    const bool mirror = pick(0, 4) == 0;
    const bool via_helper = pick(0, 5) == 0;
    const bool serial_level = pick(0, 5) == 0;
    const std::int64_t grain = pick(0, 4) == 0 ? pick(1, 8) : 0;

    std::function<void(int, int)> level = [&](int d, int prefix) {
      auto body = [&, d, prefix](int iv) {
        int idx = iv;
        if (prefix >= 0) {
          const int scaled = b.arith(Op::IMul, {Operand::r(prefix), Operand::imm(shape[static_cast<std::size_t>(d)])}, "s");
          idx = b.arith(Op::IAdd, {Operand::r(scaled), Operand::r(iv)}, "p");
        }
        if (d + 1 < rank) {
          level(d + 1, idx);
          return;
        }
        if (via_helper) {
          helper_used = true;
          b.call("scale", {Operand::r(src), Operand::r(dst), Operand::r(idx), Operand::immf(-1.25f)});
          return;
        }
        Operand at = Operand::r(idx);
        if (mirror) at = Operand::r(b.arith(Op::ISub, {Operand::imm(elems - 1), Operand::r(idx)}, "m"));
        const int shifted = b.arith(Op::IAdd, {at, Operand::r(zero)}, "q");
        int v = b.load(src, Operand::r(shifted));
        const int ops = static_cast<int>(pick(1, 3));
        for (int o = 0; o < ops; ++o) {
          if (pick(0, 2) == 0) {
            v = b.arith(unary[pick(0, 4)], {Operand::r(v)});
          } else if (pick(0, 1) == 0) {
            const int w = b.load(other, Operand::r(idx), "w");
            v = b.arith(binary[pick(0, 3)], {Operand::r(v), Operand::r(w)});
          } else {
            const int c = b.arith(Op::IToF, {Operand::r(two)}, "c");
            v = b.arith(binary[pick(0, 3)], {Operand::r(v), Operand::r(c)});
          }
        }
        b.store(dst, Operand::r(idx), Operand::r(v));
      };
      const Operand hi = Operand::imm(shape[static_cast<std::size_t>(d)]);
      if (serial_level && d == rank - 1) {
        b.for_(Operand::imm(0), hi, body, "j");
      } else {
        b.pfor(Operand::imm(0), hi, body, d == 0 ? grain : 0);
      }
    };
    level(0, -1);
  };

  const bool branch = pick(0, 3) == 0;
  int other_block = -1;
  int join = -1;
  if (branch) {
    const int flag = b.arith(Op::ILt, {Operand::imm(pick(0, 3)), Operand::imm(2)}, "flag");
    const int taken = b.new_block();
    other_block = b.new_block();
    join = b.new_block();
    Instr cbr;
    cbr.op = Op::CBr;
    cbr.args = {Operand::r(flag)};
    cbr.targets = {taken, other_block};
    b.emit(cbr);
    b.set_block(taken);
  }
  for (int s = 0; s < stages; ++s) {
    const int dst = s + 1 == stages ? y : temps[static_cast<std::size_t>(s)];
    stage(dst);
    sources.push_back(dst);
  }
  if (branch) {
    Instr br;
    br.op = Op::Br;
    br.targets = {join};
    b.emit(br);
    b.set_block(other_block);
    sources.resize(2);
    stage(y);
    b.emit(br);
    b.set_block(join);
  }
  b.ret();
  m.add(std::move(b).finish());
  if (helper_used) m.add(std::move(helper));
  return m;
}

}  // namespace fjc::testing
