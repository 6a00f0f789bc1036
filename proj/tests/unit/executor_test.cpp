#include <gtest/gtest.h>

#include "fjc/exec/executor.hpp"
#include "fjc/exec/interpreter.hpp"
#include "fjc/ir/fj.hpp"
#include "random_fj.hpp"

using namespace fjc;
using namespace fjc::exec;
using namespace fjc::ir;

namespace {

TensorBuffer vec(std::vector<float> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return TensorBuffer::from_f32({n}, std::move(v));
}

TensorBuffer random_vec(std::int64_t n, std::uint64_t seed) { return random_uniform(graph::f32({n}), seed); }

bool bitwise_equal(const std::vector<TensorBuffer>& a, const std::vector<TensorBuffer>& b) {
  return compare(a, b, 0.0).ok;
}

}  // namespace

TEST(Executor, IdentityCopiesInput) {
  auto m = parse_fj_text(R"(
entry @main
func @main(%x: buf<16xf32>, out %y: buf<16xf32>) {
^bb0:
  pfor %i in [0, 16) {
  ^bb0:
    %v = load %x[%i]
    store %y[%i], %v
    yield
  }
  ret
}
)");
  auto x = random_vec(16, 3);
  runtime::TaskPool pool(4, 1);
  auto par = execute_fj(m, std::vector{x}, pool);
  ASSERT_EQ(par.outputs.size(), 1u);
  EXPECT_EQ(par.outputs[0], x);
  auto ser = execute_serial(m, std::vector{x});
  EXPECT_EQ(ser.outputs[0], x);
}

TEST(Executor, ElidedPforWritesIndices) {
  auto m = parse_fj_text(R"(
entry @main
func @main(out %buf: buf<8xf32>) {
^bb0:
  pfor %i in [0, 8) {
  ^bb0:
    %v = itof %i
    store %buf[%i], %v
    yield
  }
  ret
}
)");
  auto elided = serial_elision(m);
  EXPECT_EQ(count_constructs(elided).pfors, 0);
  auto r = Executable(elided).run({}, nullptr);
  EXPECT_EQ(r.outputs[0], vec({0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(r.counters.spawns, 0);
  EXPECT_EQ(r.counters.steals, 0);
  EXPECT_EQ(r.mode, "serial");
}

TEST(Executor, EmptyEntryReturnsImmediately) {
  auto m = parse_fj_text("entry @main\nfunc @main() {\n^bb0:\n  ret\n}\n");
  auto r = execute_serial(m, {});
  EXPECT_TRUE(r.outputs.empty());
  EXPECT_EQ(r.counters.spawns, 0);
}

TEST(Executor, RandomNestsAgreeAcrossWorkerCounts) {
  std::vector<std::unique_ptr<runtime::TaskPool>> pools;
  for (int p : {1, 2, 4, 8}) pools.push_back(std::make_unique<runtime::TaskPool>(p, 17));
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    auto g = fjc::testing::random_pfor_nest(seed);
    std::vector<TensorBuffer> in{random_vec(g.elements, seed)};
    const auto serial = execute_serial(g.module, in).outputs;
    Executable exe(g.module);
    for (auto& pool : pools) {
      auto r = exe.run(in, pool.get());
      EXPECT_TRUE(bitwise_equal(r.outputs, serial)) << "seed " << seed << " P=" << pool->workers();
      EXPECT_EQ(r.counters.total_executed(), r.counters.spawns + r.counters.roots);
    }
  }
}

TEST(Executor, CheckedModeReportsOutOfBounds) {
  auto m = parse_fj_text(R"(
entry @main
func @main(%x: buf<8xf32>, out %y: buf<8xf32>) {
^bb0:
  pfor %i in [0, 8) {
  ^bb0:
    %j = iadd %i, 1
    %v = load %x[%j]
    store %y[%i], %v
    yield
  }
  ret
}
)");
  std::vector<TensorBuffer> in{random_vec(8, 1)};
  runtime::TaskPool pool(4, 2);
  for (runtime::TaskPool* p : {static_cast<runtime::TaskPool*>(nullptr), &pool}) {
    try {
      Executable(m, {.checked = true}).run(in, p);
      FAIL() << "expected OutOfBounds";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::OutOfBounds);
      EXPECT_NE(std::string(e.what()).find("load %x[8]"), std::string::npos) << e.what();
    }
  }
}

TEST(Executor, InputMismatchNamesParameter) {
  auto m = parse_fj_text(R"(
entry @main
func @main(%a: buf<4xf32>, %b: buf<2x3xf32>, out %y: buf<4xf32>) {
^bb0:
  ret
}
)");
  try {
    execute_serial(m, std::vector{random_vec(4, 1), random_vec(6, 2)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InputMismatch);
    EXPECT_NE(std::string(e.what()).find("parameter 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(execute_serial(m, std::vector{random_vec(4, 1)}), Error);
}

TEST(Executor, DetachedTasksCallsAndDepth) {
  // @half(out, lo, hi) recursively splits [lo, hi) and writes out[i] = 2i.
  auto m = parse_fj_text(R"(
entry @main
func @half(out %y: buf<64xf32>, %lo: i64, %hi: i64) {
^bb0:
  %n = isub %hi, %lo
  %small = ilt %n, 2
  cbr %small, ^bb1, ^bb2
^bb1:
  %v = itof %lo
  %w = fadd %v, %v
  store %y[%lo], %w
  ret
^bb2:
  %h = idiv %n, 2
  %mid = iadd %lo, %h
  detach ^bb3, ^bb4
^bb3:
  call @half(%y, %lo, %mid)
  reattach ^bb4
^bb4:
  call @half(%y, %mid, %hi)
  sync
  ret
}
func @main(out %y: buf<64xf32>) {
^bb0:
  call @half(%y, 0, 64)
  ret
}
)");
  std::vector<float> want(64);
  for (int i = 0; i < 64; ++i) want[static_cast<std::size_t>(i)] = static_cast<float>(2 * i);
  runtime::TaskPool pool(3, 5);
  auto r = execute_fj(m, {}, pool);
  EXPECT_EQ(r.outputs[0], vec(want));
  EXPECT_EQ(r.counters.spawns, 63);
  EXPECT_EQ(r.max_depth, 8);  // main + 7 levels of @half
  auto s = execute_serial(m, {});
  EXPECT_EQ(s.outputs[0], vec(want));
  EXPECT_EQ(s.max_depth, 8);
}

TEST(Executor, AllocatedIntermediateAndConstants) {
  auto m = parse_fj_text(R"(
entry @main
func @main(%x: buf<4xf32>, out %y: buf<4xf32>) {
^bb0:
  %t = alloc : buf<4xf32>
  %k = constbuf [1.0, 2.0, 3.0, 4.0] : buf<4xf32>
  pfor %i in [0, 4) {
  ^bb0:
    %a = load %x[%i]
    %b = load %k[%i]
    %c = fmul %a, %b
    store %t[%i], %c
    yield
  }
  pfor %j in [0, 4) {
  ^bb0:
    %d = load %t[%j]
    %e = fmax %d, 0.0
    store %y[%j], %e
    yield
  }
  ret
}
)");
  auto x = vec({1.0f, -2.0f, 0.5f, -0.25f});
  runtime::TaskPool pool(2, 1);
  auto r = execute_fj(m, std::vector{x}, pool);
  EXPECT_EQ(r.outputs[0], vec({1.0f, 0.0f, 1.5f, 0.0f}));
}

TEST(Executor, FusedDotLoopMatchesNativeOrder) {
  // acc = a[0]*b[0]; then acc += a[l]*b[l] for l in [1, n)
  auto m = parse_fj_text(R"(
entry @main
func @main(%a: buf<300xf32>, %b: buf<300xf32>, out %y: buf<1xf32>) {
^bb0:
  %x0 = load %a[0]
  %y0 = load %b[0]
  %acc = fmul %x0, %y0
  %bi = imov 1
  for %l in [1, 300) {
  ^bb0:
    %p = load %a[%l]
    %q = load %b[%bi]
    %t = fmul %p, %q
    %acc = fadd %acc, %t
    %bi = iadd %bi, 1
    yield
  }
  store %y[0], %acc
  ret
}
)");
  auto a = random_vec(300, 11);
  auto b = random_vec(300, 12);
  float acc = a.f32[0] * b.f32[0];
  for (std::size_t l = 1; l < 300; ++l) acc = acc + a.f32[l] * b.f32[l];
  Executable fast(m);
  Executable checked(m, {.checked = true});
  EXPECT_EQ(fast.run(std::vector{a, b}, nullptr).outputs[0], vec({acc}));
  EXPECT_EQ(checked.run(std::vector{a, b}, nullptr).outputs[0], vec({acc}));
}

TEST(Executor, CallToDeclarationIsMissingKernel) {
  auto m = parse_fj_text(R"(
entry @main
declare @ext(out %y: buf<4xf32>) opaque cost=5
func @main(out %y: buf<4xf32>) {
^bb0:
  call @ext(%y)
  ret
}
)");
  try {
    Executable exe(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::KernelMissing);
  }
}

TEST(Executor, SerialLoopsAndBranches) {
  // y[i] = i even ? x[i] : -x[i], with a serial loop and a conditional branch.
  auto m = parse_fj_text(R"(
entry @main
func @main(%x: buf<10xf32>, out %y: buf<10xf32>) {
^bb0:
  for %i in [0, 10) {
  ^bb0:
    %r = irem %i, 2
    %e = ieq %r, 0
    %v = load %x[%i]
    cbr %e, ^bb1, ^bb2
  ^bb1:
    store %y[%i], %v
    yield
  ^bb2:
    %n = fneg %v
    store %y[%i], %n
    yield
  }
  ret
}
)");
  auto x = random_vec(10, 4);
  auto r = execute_serial(m, std::vector{x});
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(r.outputs[0].f32[i], i % 2 == 0 ? x.f32[i] : -x.f32[i]);
  }
}

TEST(Executor, ReusableAcrossRuns) {
  auto g = fjc::testing::random_pfor_nest(5);
  Executable exe(g.module);
  runtime::TaskPool pool(4, 3);
  std::vector<TensorBuffer> in{random_vec(g.elements, 1)};
  auto a = exe.run(in, &pool);
  auto b = exe.run(in, &pool);
  EXPECT_TRUE(bitwise_equal(a.outputs, b.outputs));
  EXPECT_GE(a.wall_seconds, 0.0);
  EXPECT_EQ(a.workers, 4);
}
