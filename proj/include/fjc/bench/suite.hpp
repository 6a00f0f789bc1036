#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fjc/exec/tensor.hpp"
#include "fjc/graph/hlo.hpp"
#include "fjc/kernels/kernels.hpp"

namespace fjc::bench {

struct CnnShape {
  std::int64_t batch = 4, height = 32, width = 32, channels = 3;
  std::int64_t c1 = 8, c2 = 16;  // output channels of the two 3x3 convolutions
};

struct LstmShape {
  std::int64_t steps = 16, hidden = 128, input = 64, batch = 1;
};

struct MlpShape {
  std::int64_t batch = 1, width = 512, layers = 3;
};

/// conv -> bias -> relu -> conv(stride 2) -> bias -> relu -> spatial sum.
/// Parameters (x, w1, b1, w2, b2); output [batch, c2].
graph::HloGraph cnn_graph(const CnnShape& s = {});

/// One LSTM cell unrolled over `steps`: per step z = x_t W + h U + b, gates
/// i, f, o = sigmoid and g = tanh of quarter slices of z, c = f*c + i*g,
/// h = o * tanh(c). Parameters (x [steps*batch, input], W, U, b, h0, c0);
/// outputs (h, c).
graph::HloGraph lstm_cell_graph(const LstmShape& s = {});

/// `layers` dense layers of `width` units; relu after all but the last.
/// Parameters (x, then w_k, b_k per layer).
graph::HloGraph mlp_graph(const MlpShape& s = {});

struct Benchmark {
  std::string name;
  std::function<graph::HloGraph()> build;
};

/// cnn, lstm_cell, mlp with their default shapes.
const std::vector<Benchmark>& suite();
/// Throws InvalidAttribute for an unknown name.
const Benchmark& find_benchmark(const std::string& name);

/// Every kernel the suite's graphs call after graph optimization, sorted by
/// name. The shipped kernel file holds exactly these.
std::vector<kernels::KernelSpec> suite_kernel_specs();

/// Seeded uniform [-1, 1) inputs in parameter order.
std::vector<exec::TensorBuffer> bench_inputs(const graph::HloGraph& graph, std::uint64_t seed);

}  // namespace fjc::bench
