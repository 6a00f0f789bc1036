#include "fjc/bench/suite.hpp"

#include <map>

#include "fjc/graph_opt/passes.hpp"
#include "fjc/lowering/lowering.hpp"

namespace fjc::bench {

using graph::f32;
using graph::GraphBuilder;

namespace {

int bias_relu(GraphBuilder& b, int x, int bias, std::int64_t axis, bool relu) {
  const auto shape = b.type_of(x).shape;
  const int y = b.add(x, b.broadcast(bias, shape, {axis}));
  return relu ? b.relu(y) : y;
}

}  // namespace

graph::HloGraph cnn_graph(const CnnShape& s) {
  GraphBuilder b;
  const int x = b.parameter(f32({s.batch, s.height, s.width, s.channels}));
  const int w1 = b.parameter(f32({3, 3, s.channels, s.c1}));
  const int b1 = b.parameter(f32({s.c1}));
  const int w2 = b.parameter(f32({3, 3, s.c1, s.c2}));
  const int b2 = b.parameter(f32({s.c2}));
  int h = bias_relu(b, b.conv2d(x, w1, 1), b1, 3, true);
  h = bias_relu(b, b.conv2d(h, w2, 2), b2, 3, true);
  const auto shape = b.type_of(h).shape;
  h = b.reshape(h, {shape[0], shape[1] * shape[2], shape[3]});
  b.set_outputs({b.reduce(h, ReduceOp::Sum, 1)});
  return std::move(b).finish();
}

graph::HloGraph lstm_cell_graph(const LstmShape& s) {
  GraphBuilder b;
  const std::int64_t hd = s.hidden;
  const int xs = b.parameter(f32({s.steps * s.batch, s.input}));
  const int w = b.parameter(f32({s.input, 4 * hd}));
  const int u = b.parameter(f32({hd, 4 * hd}));
  const int bias = b.parameter(f32({4 * hd}));
  int h = b.parameter(f32({s.batch, hd}));
  int c = b.parameter(f32({s.batch, hd}));
  for (std::int64_t t = 0; t < s.steps; ++t) {
    const int xt = b.slice(xs, 0, t * s.batch, s.batch);
    const int z = bias_relu(b, b.add(b.matmul(xt, w), b.matmul(h, u)), bias, 1, false);
    const int i = b.sigmoid(b.slice(z, 1, 0, hd));
    const int f = b.sigmoid(b.slice(z, 1, hd, hd));
    const int g = b.tanh(b.slice(z, 1, 2 * hd, hd));
    const int o = b.sigmoid(b.slice(z, 1, 3 * hd, hd));
    c = b.add(b.mul(f, c), b.mul(i, g));
    h = b.mul(o, b.tanh(c));
  }
  b.set_outputs({h, c});
  return std::move(b).finish();
}

graph::HloGraph mlp_graph(const MlpShape& s) {
  GraphBuilder b;
  int h = b.parameter(f32({s.batch, s.width}));
  for (std::int64_t l = 0; l < s.layers; ++l) {
    const int w = b.parameter(f32({s.width, s.width}));
    const int bias = b.parameter(f32({s.width}));
    h = bias_relu(b, b.matmul(h, w), bias, 1, l + 1 < s.layers);
  }
  b.set_outputs({h});
  return std::move(b).finish();
}

const std::vector<Benchmark>& suite() {
  static const std::vector<Benchmark> benchmarks{
      {"cnn", [] { return cnn_graph(); }},
      {"lstm_cell", [] { return lstm_cell_graph(); }},
      {"mlp", [] { return mlp_graph(); }},
  };
  return benchmarks;
}

const Benchmark& find_benchmark(const std::string& name) {
  for (const auto& bm : suite()) {
    if (bm.name == name) return bm;
  }
  throw Error(ErrorKind::InvalidAttribute, "unknown benchmark '" + name + "' (expected cnn, lstm_cell or mlp)");
}

std::vector<kernels::KernelSpec> suite_kernel_specs() {
  std::map<std::string, kernels::KernelSpec> specs;
  for (const auto& bm : suite()) {
    lowering::LoweringConfig config;
    const auto m = lowering::lower_graph(graph_opt::run_hlo_pipeline(bm.build()), config);
    for (const auto& [name, fn] : m.functions) {
      if (name != m.entry) specs.emplace(name, kernels::parse_kernel_name(name));
    }
  }
  std::vector<kernels::KernelSpec> out;
  for (auto& [name, spec] : specs) out.push_back(spec);
  return out;
}

std::vector<exec::TensorBuffer> bench_inputs(const graph::HloGraph& graph, std::uint64_t seed) {
  return exec::random_inputs(graph, seed);
}

}  // namespace fjc::bench
