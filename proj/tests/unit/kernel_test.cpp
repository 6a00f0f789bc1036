#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fjc/exec/executor.hpp"
#include "fjc/ir/fj.hpp"
#include "fjc/kernels/kernels.hpp"
#include "fjc/opt/passes.hpp"
#include "kernel_oracles.hpp"

using namespace fjc;
using namespace fjc::exec;
using namespace fjc::ir;
using namespace fjc::kernels;
using fjc::testing::conv_oracle;
using fjc::testing::matmul_oracle;
using fjc::testing::reduce_oracle;

namespace {

FjModule single(FjFunction fn) {
  FjModule m;
  m.entry = fn.name;
  m.add(std::move(fn));
  return m;
}

std::vector<float> random_values(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

TensorBuffer buffer(std::vector<std::int64_t> shape, std::vector<float> data) {
  return TensorBuffer::from_f32(std::move(shape), std::move(data));
}

std::vector<float> run_serial(const FjFunction& fn, std::vector<TensorBuffer> inputs) {
  auto report = execute_serial(single(fn), inputs, {.checked = true});
  return report.outputs.at(0).f32;
}

std::vector<float> run_parallel(const FjModule& m, std::vector<TensorBuffer> inputs, int workers) {
  runtime::TaskPool pool(workers, 7);
  return execute_fj(m, inputs, pool).outputs.at(0).f32;
}

}  // namespace

TEST(KernelNames, RoundTrip) {
  const KernelSpec specs[] = {KernelSpec::matmul(13, 7, 5), KernelSpec::conv2d(1, 8, 8, 3, 3, 3, 4, 1),
                              KernelSpec::reduce(1, 777, 1, ReduceOp::Sum),
                              KernelSpec::reduce(2, 3, 4, ReduceOp::Max).with_variant(Variant::OpaquePrecompiled)};
  EXPECT_EQ(specs[0].name(), "kernel.matmul.13x7x5");
  EXPECT_EQ(specs[1].name(), "kernel.conv2d.1x8x8x3.3x3x4.s1");
  EXPECT_EQ(specs[2].name(), "kernel.reduce.sum.1x777x1");
  EXPECT_EQ(specs[3].name(), "kernel.reduce.max.2x3x4.opaque");
  for (const auto& s : specs) EXPECT_EQ(parse_kernel_name(s.name()), s);
  EXPECT_THROW(parse_kernel_name("kernel.matmul.1x2"), Error);
  EXPECT_THROW(parse_kernel_name("matmul"), Error);
}

TEST(MatMul, IdentityAndScalar) {
  auto c = run_serial(build_matmul(2, 2, 2), {buffer({2, 2}, {1, 0, 0, 1}), buffer({2, 2}, {3, -1, 0.5f, 7})});
  EXPECT_EQ(c, (std::vector<float>{3, -1, 0.5f, 7}));
  auto s = run_serial(build_matmul(1, 1, 1), {buffer({1, 1}, {1.5f}), buffer({1, 1}, {-4})});
  EXPECT_EQ(s, std::vector<float>{-6.0f});
}

TEST(MatMul, MatchesOracleOnRandomShapes) {
  std::mt19937_64 rng(11);
  auto dim = [&](int lo, int hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  for (int trial = 0; trial < 110; ++trial) {
    const std::int64_t m = dim(1, 6), n = dim(1, 6);
    const std::int64_t k = trial % 5 == 0 ? dim(257, 900) : dim(1, 40);
    auto a = random_values(static_cast<std::size_t>(m * k), rng);
    auto b = random_values(static_cast<std::size_t>(k * n), rng);
    auto got = run_serial(build_matmul(m, k, n), {buffer({m, k}, a), buffer({k, n}, b)});
    ASSERT_EQ(got, matmul_oracle(a, b, m, k, n)) << m << "x" << k << "x" << n;
  }
}

TEST(MatMul, Random13x7x5) {
  std::mt19937_64 rng(5);
  auto a = random_values(13 * 7, rng);
  auto b = random_values(7 * 5, rng);
  EXPECT_EQ(run_serial(build_matmul(13, 7, 5), {buffer({13, 7}, a), buffer({7, 5}, b)}),
            matmul_oracle(a, b, 13, 7, 5));
}

TEST(Conv2D, IdentityAndOnes) {
  std::mt19937_64 rng(3);
  auto x = random_values(2 * 4 * 5 * 1, rng);
  EXPECT_EQ(run_serial(build_conv2d(2, 4, 5, 1, 1, 1, 1, 1), {buffer({2, 4, 5, 1}, x), buffer({1, 1, 1, 1}, {1})}),
            x);
  auto y = run_serial(build_conv2d(1, 5, 5, 1, 3, 3, 1, 1),
                      {buffer({1, 5, 5, 1}, std::vector<float>(25, 1.0f)), buffer({3, 3, 1, 1}, std::vector<float>(9, 1.0f))});
  EXPECT_EQ(y, std::vector<float>(9, 9.0f));
}

TEST(Conv2D, MatchesOracleOnRandomShapes) {
  std::mt19937_64 rng(17);
  auto dim = [&](int lo, int hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  for (int trial = 0; trial < 110; ++trial) {
    std::int64_t n = dim(1, 2), kh = dim(1, 3), kw = dim(1, 3), s = dim(1, 2);
    std::int64_t h = kh + dim(0, 5), w = kw + dim(0, 5), ci = dim(1, 3), co = dim(1, 4);
    if (trial == 0) n = 1, h = 8, w = 8, ci = 3, kh = 3, kw = 3, co = 4, s = 1;
    auto x = random_values(static_cast<std::size_t>(n * h * w * ci), rng);
    auto f = random_values(static_cast<std::size_t>(kh * kw * ci * co), rng);
    auto got = run_serial(build_conv2d(n, h, w, ci, kh, kw, co, s), {buffer({n, h, w, ci}, x), buffer({kh, kw, ci, co}, f)});
    ASSERT_EQ(got, conv_oracle(x, f, n, h, w, ci, kh, kw, co, s)) << "trial " << trial;
  }
}

TEST(Reduce, SmallCases) {
  EXPECT_EQ(run_serial(build_reduce(1, ReduceOp::Sum), {buffer({1, 1, 1}, {2.5f})}), std::vector<float>{2.5f});
  EXPECT_EQ(run_serial(build_reduce(1000, ReduceOp::Sum), {buffer({1, 1000, 1}, std::vector<float>(1000, 1.0f))}),
            std::vector<float>{1000.0f});
}

TEST(Reduce, MatchesOracleOnRandomShapes) {
  std::mt19937_64 rng(23);
  auto dim = [&](int lo, int hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  for (int trial = 0; trial < 120; ++trial) {
    const std::int64_t outer = dim(1, 3), inner = dim(1, 3);
    std::int64_t extent = trial % 3 == 0 ? dim(257, 2100) : dim(1, 300);
    if (trial == 0) extent = 777;
    const bool max = trial % 2 == 1;
    auto x = random_values(static_cast<std::size_t>(outer * extent * inner), rng);
    auto got = run_serial(build_reduce(outer, extent, inner, max ? ReduceOp::Max : ReduceOp::Sum),
                          {buffer({outer, extent, inner}, x)});
    ASSERT_EQ(got, reduce_oracle(x, outer, extent, inner, max)) << outer << "x" << extent << "x" << inner;
  }
}

TEST(Kernels, VerifyAndRoundTripThroughText) {
  const std::vector<KernelSpec> specs = {KernelSpec::matmul(3, 300, 2), KernelSpec::conv2d(1, 6, 6, 2, 3, 3, 2, 2),
                                         KernelSpec::reduce(2, 600, 3, ReduceOp::Sum),
                                         KernelSpec::reduce(1, 5, 1, ReduceOp::Max)};
  auto m = kernel_module(specs);
  EXPECT_EQ(m.functions.size(), specs.size());
  verify_or_throw(m);
  auto back = parse_fj_text(print_fj_text(m));
  for (const auto& [name, fn] : m.functions) {
    ASSERT_TRUE(back.contains(name));
    EXPECT_TRUE(isomorphic(fn, back.function(name))) << name;
    EXPECT_TRUE(fn.inline_candidate);
  }
}

TEST(Kernels, LibraryBuildAppliesNoPasses) {
  auto spec = KernelSpec::matmul(4, 5, 6);
  auto lib = KernelLibrary::from_module(kernel_module({spec}), false);
  EXPECT_EQ(structural_hash(lib->inline_kernel(spec)), structural_hash(build_matmul(4, 5, 6)));
  EXPECT_THROW(lib->inline_kernel(KernelSpec::matmul(1, 2, 3)), Error);
  auto lazy = KernelLibrary(true);
  EXPECT_EQ(structural_hash(lazy.inline_kernel(KernelSpec::matmul(1, 2, 3))), structural_hash(build_matmul(1, 2, 3)));
}

TEST(Kernels, OpaqueMatchesInlineAcrossWorkers) {
  opt::PipelineOptions options;
  options.config.grain_override = 256;
  auto pipeline = [&](const FjModule& m) { return opt::run_fj_pipeline(m, options); };
  std::mt19937_64 rng(29);
  const std::vector<KernelSpec> specs = {KernelSpec::matmul(64, 64, 64), KernelSpec::conv2d(2, 9, 9, 3, 3, 3, 4, 1),
                                         KernelSpec::reduce(3, 1500, 2, ReduceOp::Max)};
  for (const auto& spec : specs) {
    std::vector<TensorBuffer> inputs;
    auto sig = spec.signature();
    for (std::size_t p = 0; p + 1 < sig.size(); ++p) {
      inputs.push_back(buffer(sig[p].shape, random_values(static_cast<std::size_t>(sig[p].extent()), rng)));
    }
    auto inline_fn = build_kernel(spec);
    const auto expected = run_serial(inline_fn, inputs);
    auto opaque = precompile_opaque(spec.with_variant(Variant::OpaquePrecompiled), pipeline);
    ASSERT_FALSE(opaque.empty());
    EXPECT_TRUE(opaque[0].opaque);
    EXPECT_FALSE(opaque[0].inline_candidate);
    EXPECT_TRUE(opaque[0].cost.has_value());
    FjModule m;
    m.entry = opaque[0].name;
    for (auto& f : opaque) m.add(f);
    verify_or_throw(m);
    for (int workers : {1, 2, 4}) EXPECT_EQ(run_parallel(m, inputs, workers), expected) << spec.name();
  }
}

TEST(Kernels, OpaqueCalleeSurvivesCallerPasses) {
  opt::PipelineOptions options;
  options.config.grain_override = 256;
  auto lib = std::make_shared<KernelLibrary>(true);
  auto spec = KernelSpec::matmul(8, 8, 8);
  auto fns = lib->opaque_kernel(spec.with_variant(Variant::OpaquePrecompiled), "g256",
                                [&](const FjModule& m) { return opt::run_fj_pipeline(m, options); });
  FunctionBuilder b("main");
  const int a = b.param("a", ValueType::buf({8, 8}));
  const int bb = b.param("b", ValueType::buf({8, 8}));
  const int c = b.param("c", ValueType::buf({8, 8}), true);
  b.call(fns[0].name, {Operand::r(a), Operand::r(bb), Operand::r(c)});
  b.ret();
  FjModule m;
  m.entry = "main";
  m.add(std::move(b).finish());
  for (auto& f : fns) m.add(f);
  const auto before = count_constructs(m.function("main"));
  auto after = opt::run_fj_pipeline(m, {});
  EXPECT_EQ(count_constructs(after.function("main")).calls, before.calls);
  EXPECT_TRUE(after.contains(fns[0].name));
  EXPECT_EQ(print_fj_function(after.function(fns[0].name)), print_fj_function(fns[0]));
}
