#include <gtest/gtest.h>

#include "fjc/ir/fj.hpp"
#include "random_fj.hpp"

using namespace fjc;
using namespace fjc::ir;

namespace {

bool has_rule(const std::vector<FjDiagnostic>& diags, const std::string& rule) {
  for (const auto& d : diags) {
    if (d.rule == rule) return true;
  }
  return false;
}

std::string rules(const std::vector<FjDiagnostic>& diags) {
  std::string s;
  for (const auto& d : diags) s += d.function + " " + d.block + " " + d.rule + ": " + d.message + "\n";
  return s;
}

FjModule single(const std::string& text) { return parse_fj_text_unverified(text); }

}  // namespace

TEST(FjVerify, DetachedBlockThatReturnsIsRejected) {
  auto m = single(R"(
func @f(out %y: buf<4xf32>) {
^bb0:
  detach ^bb1, ^bb2
^bb1:
  store %y[0], 1.0
  ret
^bb2:
  sync
  ret
}
)");
  auto diags = verify(m);
  ASSERT_TRUE(has_rule(diags, "DetachMustReattach")) << rules(diags);
  bool found = false;
  for (const auto& d : diags) {
    if (d.message.find("detached region must reattach") != std::string::npos) {
      EXPECT_EQ(d.function, "f");
      EXPECT_FALSE(d.block.empty());
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(FjVerify, StraightLineSerialFunction) {
  auto m = single(R"(
entry @f
func @f(%x: buf<2xf32>, out %y: buf<2xf32>) {
^bb0:
  %a = load %x[0]
  %b = fmul %a, 2.0
  %c = fadd %b, 1
  store %y[0], %c
  %d = load %x[1]
  %e = fexp %d
  store %y[1], %e
  ret
}
)");
  EXPECT_TRUE(verify(m).empty()) << rules(verify(m));
}

TEST(FjVerify, RandomPforNestsAreAccepted) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    auto g = fjc::testing::random_pfor_nest(seed);
    auto diags = verify(g.module);
    ASSERT_TRUE(diags.empty()) << "seed " << seed << "\n" << rules(diags) << print_fj_text(g.module);
  }
}

TEST(FjVerify, MissingSyncBeforeReturn) {
  auto m = single(R"(
func @f(out %y: buf<4xf32>) {
^bb0:
  detach ^bb1, ^bb2
^bb1:
  store %y[0], 1.0
  reattach ^bb2
^bb2:
  ret
}
)");
  EXPECT_TRUE(has_rule(verify(m), "MissingSync")) << rules(verify(m));
}

TEST(FjVerify, SyncOnOnlyOnePathIsRejected) {
  auto m = single(R"(
func @f(out %y: buf<4xf32>, %c: i64) {
^bb0:
  detach ^bb1, ^bb2
^bb1:
  store %y[0], 1.0
  reattach ^bb2
^bb2:
  cbr %c, ^bb3, ^bb4
^bb3:
  sync
  ret
^bb4:
  ret
}
)");
  EXPECT_TRUE(has_rule(verify(m), "MissingSync"));
}

TEST(FjVerify, InductionVariableIsReadOnly) {
  auto m = single(R"(
func @f(out %y: buf<8xf32>) {
^bb0:
  pfor %i in [0, 8) {
  ^bb0:
    %i = iadd %i, 1
    yield
  }
  ret
}
)");
  EXPECT_TRUE(has_rule(verify(m), "InductionVarReadOnly"));
}

TEST(FjVerify, BranchOutOfLoopBodyIsRejected) {
  auto m = single(R"(
func @f(out %y: buf<8xf32>) {
^bb0:
  pfor %i in [0, 8) {
  ^bb0:
    ret
  }
  ret
}
)");
  EXPECT_TRUE(has_rule(verify(m), "BranchEscapesRegion"));
}

TEST(FjVerify, ReattachToWrongContinuation) {
  auto m = single(R"(
func @f(out %y: buf<4xf32>) {
^bb0:
  detach ^bb1, ^bb2
^bb1:
  reattach ^bb3
^bb2:
  br ^bb3
^bb3:
  sync
  ret
}
)");
  EXPECT_FALSE(verify(m).empty());
}

TEST(FjVerify, UseBeforeDefinition) {
  auto m = single(R"(
func @f(out %y: buf<4xf32>, %c: i64) {
^bb0:
  cbr %c, ^bb1, ^bb2
^bb1:
  %v = fadd 1.0, 2.0
  br ^bb2
^bb2:
  store %y[0], %v
  ret
}
)");
  EXPECT_TRUE(has_rule(verify(m), "UseBeforeDef"));
}

TEST(FjVerify, StoreToInputBufferAndStaticOutOfBounds) {
  auto m = single(R"(
func @f(%x: buf<4xf32>, out %y: buf<4xf32>) {
^bb0:
  store %x[0], 1.0
  store %y[4], 1.0
  ret
}
)");
  auto d = verify(m);
  EXPECT_TRUE(has_rule(d, "StoreToReadOnly"));
  EXPECT_TRUE(has_rule(d, "OutOfBounds"));
}

TEST(FjVerify, UnresolvedCallAndDeclaredExternal) {
  auto bad = single(R"(
func @f(out %y: buf<4xf32>) {
^bb0:
  call @g(%y)
  ret
}
)");
  EXPECT_TRUE(has_rule(verify(bad), "UnresolvedCall"));
  auto ok = single(R"(
declare @g(out %a: buf<4xf32>) opaque cost=10
func @f(out %y: buf<4xf32>) {
^bb0:
  call @g(%y)
  ret
}
)");
  EXPECT_TRUE(verify(ok).empty()) << rules(verify(ok));
}

TEST(FjVerify, DetachedValueEscapingIsRejected) {
  auto m = single(R"(
func @f(out %y: buf<4xf32>) {
^bb0:
  detach ^bb1, ^bb2
^bb1:
  %v = fadd 1.0, 2.0
  reattach ^bb2
^bb2:
  sync
  store %y[0], %v
  ret
}
)");
  EXPECT_FALSE(verify(m).empty());
}

TEST(FjVerify, VerifyOrThrowUsesVerifyError) {
  auto m = single("func @f(out %y: buf<4xf32>) {\n^bb0:\n  store %y[9], 1.0\n  ret\n}\n");
  try {
    verify_or_throw(m);
    FAIL() << "expected VerifyError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::VerifyError);
  }
}

TEST(FjElision, SerialModuleIsFixpoint) {
  auto m = parse_fj_text(R"(
func @f(%x: buf<2xf32>, out %y: buf<2xf32>) {
^bb0:
  for %i in [0, 2) {
  ^bb0:
    %a = load %x[%i]
    store %y[%i], %a
    yield
  }
  ret
}
)");
  auto e = serial_elision(m);
  EXPECT_EQ(print_fj_text(e), print_fj_text(m));
}

TEST(FjElision, RemovesAllParallelConstructs) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto g = fjc::testing::random_pfor_nest(seed);
    auto e = serial_elision(g.module);
    EXPECT_TRUE(verify(e).empty()) << "seed " << seed << "\n" << rules(verify(e));
    auto c = count_constructs(e);
    EXPECT_EQ(c.detaches, 0);
    EXPECT_EQ(c.reattaches, 0);
    EXPECT_EQ(c.pfors, 0);
    EXPECT_EQ(c.syncs, 0);
    auto c0 = count_constructs(g.module);
    EXPECT_EQ(c.fors, c0.fors + c0.pfors);
    EXPECT_EQ(print_fj_text(serial_elision(e)), print_fj_text(e)) << "elision not idempotent, seed " << seed;
  }
}

TEST(FjElision, DetachBecomesBranch) {
  auto m = parse_fj_text(R"(
func @f(out %y: buf<4xf32>) {
^bb0:
  detach ^bb1, ^bb2
^bb1:
  store %y[0], 1.0
  reattach ^bb2
^bb2:
  sync
  ret
}
)");
  auto e = serial_elision(m);
  const auto& blocks = e.function("f").body.blocks;
  EXPECT_EQ(blocks[0].terminator().op, Op::Br);
  EXPECT_EQ(blocks[0].terminator().targets, std::vector<int>{1});
  EXPECT_EQ(blocks[1].terminator().op, Op::Br);
  EXPECT_EQ(blocks[1].terminator().targets, std::vector<int>{2});
  EXPECT_EQ(blocks[2].instrs.size(), 1u);
}

TEST(FjElision, MalformedInputThrows) {
  auto m = single("func @f(out %y: buf<4xf32>) {\n^bb0:\n  store %y[9], 1.0\n  ret\n}\n");
  EXPECT_THROW(serial_elision(m), Error);
}

TEST(FjText, PforSkeleton) {
  auto m = parse_fj_text(R"(
entry @main
func @main(%p: buf<1024xf32>, out %q: buf<1024xf32>) {
^bb0:
  pfor %i in [0, 1024) grain 64 {
  ^bb0:
    %v = load %p[%i]
    store %q[%i], %v
    yield
  }
  ret
}
)");
  auto c = count_constructs(m);
  EXPECT_EQ(c.pfors, 1);
  EXPECT_EQ(c.detaches, 0);
  const Instr& loop = m.function("main").body.blocks[0].instrs[0];
  EXPECT_EQ(loop.op, Op::PFor);
  EXPECT_EQ(loop.grain, 64);
}

TEST(FjText, MissingContinuationLabelIsParseError) {
  const char* text = R"(
func @f(out %y: buf<4xf32>) {
^bb0:
  detach ^body, ^cont
^body:
  store %y[0], 1.0
  reattach ^cont
}
)";
  try {
    parse_fj_text(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4);
    EXPECT_GT(e.column(), 1);
  }
}

TEST(FjText, ErrorsCarryLocations) {
  EXPECT_THROW(parse_fj_text("func @f( {"), ParseError);
  EXPECT_THROW(parse_fj_text("func @f() {\n^bb0:\n  %x = bogus 1, 2\n  ret\n}\n"), ParseError);
  EXPECT_THROW(parse_fj_text("func @f() {\n^bb0:\n  %x = fadd %nope, 1.0\n  ret\n}\n"), ParseError);
  EXPECT_THROW(parse_fj_text("func @f() {\n^bb0:\n  %x = fadd 1.0, 1.0\n  %x = iadd 1, 1\n  ret\n}\n"),
               ParseError);
  try {
    parse_fj_text("func @f() {\n^bb0:\n  ret\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_GE(e.line(), 1);
  }
}

TEST(FjText, VerifyErrorAfterParse) {
  try {
    parse_fj_text("func @f(%x: buf<4xf32>) {\n^bb0:\n  store %x[0], 1.0\n  ret\n}\n");
    FAIL();
  } catch (const ParseError&) {
    FAIL() << "parse should succeed";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::VerifyError);
  }
}

TEST(FjText, FloatImmediatesRoundTripBitwise) {
  auto m = parse_fj_text(R"(
func @f(out %y: buf<4xf32>) {
^bb0:
  %a = fadd 0.1, 3
  %b = fmul %a, -1e-30
  %c = fmax %b, -inf
  %k = constbuf [0.33333334, 1e+30, -0.0, 7] : buf<4xf32>
  %v = load %k[3]
  %d = fadd %c, %v
  store %y[0], %d
  ret
}
)");
  auto text = print_fj_text(m);
  auto again = parse_fj_text(text);
  EXPECT_EQ(print_fj_text(again), text);
  const auto& in = again.function("f").body.blocks[0].instrs[0];
  EXPECT_EQ(in.args[0], Operand::immf(0.1f));
  EXPECT_EQ(in.args[1], Operand::immf(3.0f));
  const auto& k = again.function("f").body.blocks[0].instrs[3].payload;
  EXPECT_TRUE(std::signbit(k[2]));
}

TEST(FjText, RandomModulesRoundTripIsomorphic) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto g = fjc::testing::random_pfor_nest(seed);
    const auto text = print_fj_text(g.module);
    auto parsed = parse_fj_text(text);
    EXPECT_EQ(print_fj_text(parsed), text) << "seed " << seed;
    EXPECT_TRUE(isomorphic(parsed.function("main"), g.module.function("main")));
    EXPECT_EQ(structural_hash(parsed.function("main")), structural_hash(g.module.function("main")));
  }
}

TEST(FjText, CanonicalizeIgnoresRegisterNames) {
  const char* a = R"(
func @f(%x: buf<2xf32>, out %y: buf<2xf32>) {
^bb0:
  %a = load %x[0]
  %b = fadd %a, 1.0
  store %y[0], %b
  ret
}
)";
  const char* b = R"(
func @f(%in: buf<2xf32>, out %out: buf<2xf32>) {
^bb0:
  %zz = load %in[0]
  %q = fadd %zz, 1.0
  store %out[0], %q
  ret
}
)";
  const char* c = R"(
func @f(%in: buf<2xf32>, out %out: buf<2xf32>) {
^bb0:
  %zz = load %in[1]
  %q = fadd %zz, 1.0
  store %out[0], %q
  ret
}
)";
  auto fa = parse_fj_text(a).function("f");
  auto fb = parse_fj_text(b).function("f");
  auto fc = parse_fj_text(c).function("f");
  EXPECT_TRUE(isomorphic(fa, fb));
  EXPECT_EQ(structural_hash(fa), structural_hash(fb));
  EXPECT_FALSE(isomorphic(fa, fc));
}

TEST(FjCounts, SerialAndPfor) {
  auto serial = parse_fj_text("func @f(out %y: buf<1xf32>) {\n^bb0:\n  store %y[0], 1.0\n  ret\n}\n");
  auto c = count_constructs(serial);
  EXPECT_EQ(c.detaches, 0);
  EXPECT_EQ(c.syncs, 0);
  EXPECT_EQ(c.instrs, 2);
  auto g = fjc::testing::random_pfor_nest(7, {.max_depth = 1, .allow_detach = false, .allow_serial_loops = false});
  EXPECT_EQ(count_constructs(g.module).pfors, 1);
}

TEST(FjCounts, Deterministic) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto a = fjc::testing::random_pfor_nest(seed);
    auto b = fjc::testing::random_pfor_nest(seed);
    EXPECT_EQ(count_constructs(a.module), count_constructs(b.module));
    EXPECT_EQ(count_constructs(a.module), count_constructs(parse_fj_text(print_fj_text(a.module))));
  }
}

TEST(FjBuilder, UniqueRegisterNames) {
  FunctionBuilder b("f");
  const int y = b.param("y", ValueType::buf({4}), true);
  const int t1 = b.arith(Op::FAdd, {Operand::immf(1), Operand::immf(2)});
  const int t2 = b.arith(Op::FAdd, {Operand::r(t1), Operand::immf(2)});
  b.store(y, Operand::imm(0), Operand::r(t2));
  b.ret();
  auto fn = std::move(b).finish();
  EXPECT_NE(fn.regs[static_cast<std::size_t>(t1)].name, fn.regs[static_cast<std::size_t>(t2)].name);
  FjModule m;
  m.add(fn);
  EXPECT_TRUE(verify(m).empty());
  EXPECT_THROW(m.add(fn), Error);
}
