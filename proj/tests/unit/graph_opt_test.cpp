#include <gtest/gtest.h>

#include <set>

#include "fjc/exec/interpreter.hpp"
#include "fjc/graph_opt/passes.hpp"
#include "pass_checks.hpp"
#include "random_graph.hpp"

namespace fjc::graph_opt {
namespace {

using exec::TensorBuffer;
using graph::GraphBuilder;
using graph::HloGraph;
using graph::OpKind;
using graph::f32;

std::vector<TensorBuffer> run(const HloGraph& g, std::uint64_t seed) {
  return exec::interpret_hlo(g, exec::random_inputs(g, seed));
}

void expect_same_outputs(const HloGraph& before, const HloGraph& after, std::uint64_t seed) {
  const auto a = run(before, seed);
  const auto b = run(after, seed);
  const auto report = exec::compare(a, b, 0.0);
  EXPECT_TRUE(report.ok) << report.message;
}

int duplicate_count(const HloGraph& g) {
  int dups = 0;
  for (auto a = g.nodes().begin(); a != g.nodes().end(); ++a) {
    if (a->second.kind == OpKind::Parameter) continue;
    for (auto b = std::next(a); b != g.nodes().end(); ++b) {
      if (a->second.kind == b->second.kind && a->second.operands == b->second.operands &&
          a->second.attrs == b->second.attrs) {
        ++dups;
      }
    }
  }
  return dups;
}

std::set<int> reachable(const HloGraph& g) {
  std::set<int> seen;
  std::vector<int> work = g.outputs();
  while (!work.empty()) {
    const int id = work.back();
    work.pop_back();
    if (!seen.insert(id).second) continue;
    for (int op : g.node(id).operands) work.push_back(op);
  }
  return seen;
}

TEST(Cse, MergesIdenticalAdds) {
  GraphBuilder b;
  const int x = b.parameter(f32({4}));
  const int y = b.parameter(f32({4}));
  const int a1 = b.add(x, y);
  const int a2 = b.add(x, y);
  const int u1 = b.neg(a1);
  const int u2 = b.exp(a2);
  b.set_outputs({u1, u2});
  const HloGraph g = std::move(b).finish();
  const HloGraph c = cse(g);
  EXPECT_TRUE(c.contains(a1));
  EXPECT_FALSE(c.contains(a2));
  EXPECT_EQ(c.node(u1).operands, std::vector<int>{a1});
  EXPECT_EQ(c.node(u2).operands, std::vector<int>{a1});
  EXPECT_TRUE(graph::validate(c).empty());
}

TEST(Cse, CascadesAndKeepsLowestId) {
  // %4 and %5 only become identical after %2/%3 merge.
  const HloGraph g = graph::parse_hlo_text(
      "%0 = parameter : f32[3]\n"
      "%2 = neg(%0) : f32[3]\n"
      "%3 = neg(%0) : f32[3]\n"
      "%5 = exp(%2) : f32[3]\n"
      "%4 = exp(%3) : f32[3]\n"
      "%6 = add(%4, %5) : f32[3]\n"
      "outputs: %6\n");
  const HloGraph c = cse(g);
  EXPECT_EQ(c.size(), 4u);
  EXPECT_TRUE(c.contains(2));
  EXPECT_TRUE(c.contains(4));
  EXPECT_EQ(c.node(6).operands, (std::vector<int>{4, 4}));
  expect_same_outputs(g, c, 1);
}

TEST(Cse, NoDuplicatesIsFixpoint) {
  const HloGraph g = testing::random_graph(7);
  const HloGraph c = cse(g);
  if (duplicate_count(g) == 0) EXPECT_TRUE(c == g);
  EXPECT_TRUE(cse(c) == c);
}

TEST(Cse, RandomGraphsWithInjectedDuplicates) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    testing::GraphGenOptions opt;
    opt.duplicate_rate = 0.25;
    const HloGraph g = testing::random_graph(seed, opt);
    const HloGraph c = cse(g);
    EXPECT_EQ(duplicate_count(c), 0) << seed;
    EXPECT_LE(c.size(), g.size());
    EXPECT_TRUE(graph::validate(c).empty());
    expect_same_outputs(g, c, seed);
    EXPECT_TRUE(cse(c) == c);
  }
}

TEST(Dce, RemovesUnusedConstant) {
  GraphBuilder b;
  const int x = b.parameter(f32({2}));
  const int k = b.constant(f32({2}), {1, 2});
  const int y = b.neg(x);
  b.set_outputs({y});
  const HloGraph d = dce(std::move(b).finish());
  EXPECT_FALSE(d.contains(k));
  EXPECT_EQ(d.size(), 2u);
}

TEST(Dce, AllLiveUnchanged) {
  const HloGraph g = graph::parse_hlo_text(
      "%0 = parameter : f32[2]\n%1 = neg(%0) : f32[2]\noutputs: %1\n");
  EXPECT_TRUE(dce(g) == g);
}

TEST(Dce, RandomGraphsWithDeadNodes) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    testing::GraphGenOptions opt;
    opt.outputs = 1;
    const HloGraph g = testing::random_graph(seed, opt);
    const HloGraph d = dce(g);
    const auto live = reachable(g);
    for (const auto& [id, node] : d.nodes()) {
      EXPECT_TRUE(live.count(id) || node.kind == OpKind::Parameter) << id;
    }
    for (int id : live) EXPECT_TRUE(d.contains(id));
    EXPECT_TRUE(graph::validate(d).empty());
    expect_same_outputs(g, d, seed);
    EXPECT_TRUE(dce(d) == d);
  }
}

TEST(Fusion, ChainBecomesOneNode) {
  GraphBuilder b;
  const int a = b.parameter(f32({64}));
  const int x = b.parameter(f32({64}));
  const int c = b.parameter(f32({64}));
  const int m = b.mul(a, x);
  const int s = b.add(m, c);
  const int r = b.relu(s);
  b.set_outputs({r});
  const HloGraph g = std::move(b).finish();
  const HloGraph f = fuse_elementwise(g);
  ASSERT_EQ(f.size(), 4u);
  const auto& node = f.node(r);
  ASSERT_EQ(node.kind, OpKind::Fused);
  ASSERT_EQ(node.attrs.region->members.size(), 3u);
  EXPECT_EQ(node.attrs.region->root(), r);
  EXPECT_EQ(node.operands, (std::vector<int>{a, x, c}));
  EXPECT_TRUE(graph::validate(f).empty());
  expect_same_outputs(g, f, 3);
}

TEST(Fusion, MatMulNotFused) {
  GraphBuilder b;
  const int a = b.parameter(f32({2, 3}));
  const int w = b.parameter(f32({3, 2}));
  const int x = b.parameter(f32({2, 2}));
  const int mm = b.matmul(a, w);
  const int s = b.add(x, mm);
  b.set_outputs({s});
  const HloGraph g = std::move(b).finish();
  const HloGraph f = fuse_elementwise(g);
  EXPECT_TRUE(f == g);
  EXPECT_EQ(f.node(mm).kind, OpKind::MatMul);
}

TEST(Fusion, ScalarBroadcastJoinsRegion) {
  GraphBuilder b;
  const int x = b.parameter(f32({8}));
  const int k = b.scalar(0.5f);
  const int bk = b.broadcast(k, {8}, {});
  const int y = b.mul(x, bk);
  b.set_outputs({y});
  const HloGraph f = fuse_elementwise(std::move(b).finish());
  ASSERT_EQ(f.node(y).kind, OpKind::Fused);
  EXPECT_EQ(f.node(y).operands, (std::vector<int>{k, x}));
  EXPECT_FALSE(f.contains(bk));
}

TEST(Fusion, MultiUserProducerNotDuplicated) {
  GraphBuilder b;
  const int x = b.parameter(f32({4}));
  const int e = b.exp(x);
  const int u1 = b.neg(b.add(e, x));
  const int u2 = b.tanh(b.mul(e, e));
  b.set_outputs({u1, u2});
  const HloGraph g = std::move(b).finish();
  const HloGraph f = fuse_elementwise(g);
  EXPECT_TRUE(f.contains(e));
  EXPECT_EQ(f.node(e).kind, OpKind::Exp);
  expect_same_outputs(g, f, 5);
}

TEST(Fusion, RandomElementwiseDagsBitwiseEqual) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const HloGraph g = testing::random_elementwise_graph(seed, 25, {3, 5});
    const HloGraph f = fuse_elementwise(g);
    ASSERT_TRUE(graph::validate(f).empty()) << seed;
    expect_same_outputs(g, f, seed);
    std::set<int> seen;
    int unfused_equivalent = 0;
    for (const auto& [id, node] : f.nodes()) {
      if (node.kind != OpKind::Fused) {
        ++unfused_equivalent;
        EXPECT_TRUE(seen.insert(id).second);
        continue;
      }
      unfused_equivalent += static_cast<int>(node.attrs.region->members.size());
      for (const auto& m : node.attrs.region->members) EXPECT_TRUE(seen.insert(m.id).second);
    }
    EXPECT_LE(unfused_equivalent, static_cast<int>(g.size()));
    EXPECT_TRUE(fuse_elementwise(f) == f);
  }
}

TEST(Pipeline, OptimalGraphUnchangedAfterOneIteration) {
  const HloGraph g = graph::parse_hlo_text(
      "%0 = parameter : f32[2]\n%1 = neg(%0) : f32[2]\noutputs: %1\n");
  int calls = 0;
  HloPipelineConfig cfg;
  cfg.on_pass = [&](std::string_view, const HloGraph&) { ++calls; };
  EXPECT_TRUE(run_hlo_pipeline(g, cfg) == g);
  EXPECT_EQ(calls, 3);
}

TEST(Pipeline, DuplicatedChainsMergedThenFused) {
  GraphBuilder b;
  const int x = b.parameter(f32({16}));
  const int y = b.parameter(f32({16}));
  const int c1 = b.relu(b.add(b.mul(x, y), x));
  const int c2 = b.relu(b.add(b.mul(x, y), x));
  b.set_outputs({b.sub(c1, c2)});
  const HloGraph g = std::move(b).finish();
  const HloGraph o = run_hlo_pipeline(g);
  EXPECT_LT(o.size(), g.size());
  EXPECT_EQ(o.size(), 3u);
  expect_same_outputs(g, o, 9);
}

TEST(Pipeline, RandomGraphsPreserveSemanticsAndAreIdempotent) {
  for (std::uint64_t seed = 0; seed < 80; ++seed) {
    testing::GraphGenOptions opt;
    opt.duplicate_rate = 0.1;
    const HloGraph g = testing::random_graph(seed, opt);
    const HloGraph o = run_hlo_pipeline(g);
    ASSERT_TRUE(graph::validate(o).empty()) << seed;
    expect_same_outputs(g, o, seed);
    EXPECT_TRUE(run_hlo_pipeline(o) == o) << seed;
  }
}

TEST(Pipeline, EveryPassOnRandomGraphs) {
  for (std::uint64_t seed = 100; seed < 140; ++seed) {
    testing::GraphGenOptions opt;
    opt.duplicate_rate = 0.15;
    ASSERT_EQ(testing::check_graph_passes(testing::random_graph(seed, opt), seed), "");
    ASSERT_EQ(testing::check_graph_passes(testing::random_elementwise_graph(seed, 20, {2, 3}), seed), "");
  }
}

TEST(Pipeline, RejectsInvalidInput) {
  HloGraph g;
  g.set_outputs({3});
  EXPECT_THROW(run_hlo_pipeline(g), Error);
}

TEST(Pipeline, FixpointBoundEnforced) {
  const HloGraph g = graph::parse_hlo_text(
      "%0 = parameter : f32[2]\n%1 = neg(%0) : f32[2]\n%2 = neg(%0) : f32[2]\n"
      "%3 = add(%1, %2) : f32[2]\noutputs: %3\n");
  HloPipelineConfig cfg;
  cfg.max_iterations = 1;
  try {
    run_hlo_pipeline(g, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::FixpointNotReached);
  }
}

}  // namespace
}  // namespace fjc::graph_opt
