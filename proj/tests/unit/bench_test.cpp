#include <gtest/gtest.h>

#include "fjc/bench/harness.hpp"
#include "fjc/bench/suite.hpp"
#include "fjc/exec/executor.hpp"
#include "fjc/exec/interpreter.hpp"
#include "fjc/lowering/lowering.hpp"
#include "fjc/runtime/pool.hpp"

using namespace fjc;
using namespace fjc::bench;
using graph::OpKind;

namespace {

BenchConfig quick(std::vector<std::string> names, int threads) {
  BenchConfig c;
  c.benchmarks = std::move(names);
  c.threads = threads;
  c.repeat = 3;
  c.warmup = 1;
  c.seed = 42;
  return c;
}

int count_kind(const graph::HloGraph& g, OpKind kind) {
  int n = 0;
  for (const auto& [id, node] : g.nodes()) n += node.kind == kind;
  return n;
}

}  // namespace

TEST(Suite, GraphsHaveTheAdvertisedShape) {
  const auto cnn = cnn_graph();
  graph::validate_or_throw(cnn);
  EXPECT_EQ(count_kind(cnn, OpKind::Conv2D), 2);
  EXPECT_EQ(cnn.node(cnn.parameters()[0]).type.shape, (std::vector<std::int64_t>{4, 32, 32, 3}));
  EXPECT_EQ(cnn.node(cnn.outputs()[0]).type.shape, (std::vector<std::int64_t>{4, 16}));

  const auto lstm = lstm_cell_graph();
  graph::validate_or_throw(lstm);
  EXPECT_EQ(count_kind(lstm, OpKind::MatMul), 2 * 16);
  EXPECT_EQ(count_kind(lstm, OpKind::Sigmoid), 3 * 16);
  EXPECT_EQ(count_kind(lstm, OpKind::Tanh), 2 * 16);
  EXPECT_EQ(lstm.outputs().size(), 2u);

  const auto mlp = mlp_graph();
  graph::validate_or_throw(mlp);
  EXPECT_EQ(count_kind(mlp, OpKind::MatMul), 3);
  EXPECT_EQ(count_kind(mlp, OpKind::Relu), 2);
  EXPECT_EQ(mlp.node(mlp.outputs()[0]).type.shape, (std::vector<std::int64_t>{1, 512}));
}

TEST(Suite, LookupByName) {
  EXPECT_EQ(find_benchmark("lstm_cell").name, "lstm_cell");
  try {
    find_benchmark("resnet");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidAttribute);
  }
}

TEST(Suite, InputsAreSeededUniform) {
  const auto g = mlp_graph();
  const auto a = bench_inputs(g, 9);
  const auto b = bench_inputs(g, 9);
  const auto c = bench_inputs(g, 10);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (const auto& t : a) {
    for (float v : t.f32) {
      EXPECT_GE(v, -1.0f);
      EXPECT_LT(v, 1.0f);
    }
  }
}

TEST(Suite, SmallShapesRunUnderAllModes) {
  const std::vector<graph::HloGraph> graphs{
      cnn_graph({.batch = 2, .height = 9, .width = 11, .channels = 2, .c1 = 3, .c2 = 4}),
      lstm_cell_graph({.steps = 3, .hidden = 8, .input = 5, .batch = 2}),
      mlp_graph({.batch = 3, .width = 20, .layers = 3}),
  };
  for (const auto& g : graphs) {
    const auto inputs = bench_inputs(g, 3);
    const auto expected = exec::interpret_hlo(g, inputs);
    for (auto mode : {opt::Mode::ExposedLate, opt::Mode::OpaqueEarly}) {
      for (int p : {1, 3}) {
        lowering::CompileOptions options;
        options.lowering.mode = mode;
        options.lowering.workers = p;
        const auto r = lowering::compile_graph(g, options);
        runtime::TaskPool pool(p, 1);
        EXPECT_TRUE(exec::compare(exec::execute_fj(r.module, inputs, pool).outputs, expected, 0.0).ok);
        EXPECT_TRUE(exec::compare(exec::execute_serial(r.module, inputs).outputs, expected, 0.0).ok);
      }
    }
  }
}

TEST(Suite, CnnFusionRemovesBuffers) {
  const auto g = cnn_graph();
  auto allocs = [&](opt::Mode mode) {
    lowering::CompileOptions options;
    options.lowering.mode = mode;
    options.lowering.workers = 4;
    return ir::count_constructs(lowering::compile_graph(g, options).module).allocs;
  };
  EXPECT_LT(allocs(opt::Mode::ExposedLate), allocs(opt::Mode::OpaqueEarly));
}

TEST(Harness, RejectsBadConfig) {
  for (auto mutate : std::vector<std::function<void(BenchConfig&)>>{
           [](BenchConfig& c) { c.threads = 0; }, [](BenchConfig& c) { c.repeat = 0; },
           [](BenchConfig& c) { c.benchmarks = {"nope"}; }, [](BenchConfig& c) { c.modes.clear(); },
           [](BenchConfig& c) { c.passes.spawn_cost = 0; }}) {
    BenchConfig c;
    mutate(c);
    try {
      c.validate();
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InvalidAttribute);
    }
  }
}

TEST(Harness, MlpReportSchema) {
  const auto report = run_bench(quick({"mlp"}, 1));
  ASSERT_EQ(report.results.size(), 2u);
  EXPECT_TRUE(report.all_correct());
  const auto doc = to_json(report);
  EXPECT_EQ(doc["schema"], 1);
  EXPECT_TRUE(doc["environment"].contains("physical_cores"));
  EXPECT_TRUE(doc["environment"].contains("pinned"));
  ASSERT_EQ(doc["results"].size(), 2u);
  for (const auto& r : doc["results"]) {
    for (const char* key : {"benchmark", "mode", "threads", "repeats", "mean_seconds", "stddev_seconds", "spawns",
                            "steals", "ratio"}) {
      EXPECT_TRUE(r.contains(key)) << key;
    }
    EXPECT_EQ(r["repeats"], 3);
    EXPECT_EQ(r["times_seconds"].size(), 3u);
    EXPECT_FALSE(r["ratio"].is_null());
    if (r["mode"] == "exposed-late") EXPECT_EQ(r["steals"], 0.0);
  }
  const double ratio = doc["results"][0]["ratio"];
  EXPECT_DOUBLE_EQ(ratio, report.results[1].mean_seconds / report.results[0].mean_seconds);
  EXPECT_DOUBLE_EQ(doc["geomean_ratio"].get<double>(), ratio);

  const auto table = render_table(doc);
  EXPECT_NE(table.find("mlp"), std::string::npos);
  EXPECT_NE(table.find("exposed-late"), std::string::npos);
  EXPECT_NE(table.find("opaque-early"), std::string::npos);
  EXPECT_NE(table.find("Ratio"), std::string::npos);
}

TEST(Harness, TableUsesOnlyJson) {
  const auto doc = nlohmann::json::parse(R"({
    "schema": 1,
    "environment": {"physical_cores": 8, "hardware_threads": 16, "pinned": true, "compiler": "x"},
    "config": {"threads": 4, "cv_flag": 0.2},
    "results": [
      {"benchmark": "a", "mode": "exposed-late", "correct": true, "mean_seconds": 0.002,
       "stddev_seconds": 0.0001, "high_variance": false, "ratio": 1.5},
      {"benchmark": "a", "mode": "opaque-early", "correct": true, "mean_seconds": 0.003,
       "stddev_seconds": 0.001, "high_variance": true, "ratio": 1.5},
      {"benchmark": "b", "mode": "exposed-late", "correct": false, "mean_seconds": null,
       "stddev_seconds": null, "ratio": null}
    ],
    "geomean_ratio": 1.5
  })");
  const auto table = render_table(doc);
  EXPECT_NE(table.find("2.00 +- 0.10"), std::string::npos) << table;
  EXPECT_NE(table.find("3.00 +- 1.00 *"), std::string::npos) << table;
  EXPECT_NE(table.find("FAIL"), std::string::npos) << table;
  EXPECT_NE(table.find("1.50"), std::string::npos) << table;
  EXPECT_NE(table.find("physical cores 8"), std::string::npos) << table;
  EXPECT_NE(table.find("coefficient of variation above 20%"), std::string::npos) << table;
}

TEST(Harness, RepeatedRunsDifferOnlyInTiming) {
  auto config = quick({"mlp", "cnn"}, 2);
  config.repeat = 2;
  const auto a = run_bench(config);
  const auto b = run_bench(config);
  ASSERT_EQ(a.results.size(), b.results.size());
  for (std::size_t i = 0; i < a.results.size(); ++i) EXPECT_EQ(a.results[i].outputs, b.results[i].outputs);
  EXPECT_EQ(strip_timing(to_json(a)), strip_timing(to_json(b)));
  EXPECT_NE(strip_timing(to_json(a)).dump().find("output_digest"), std::string::npos);
}
