#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fjc/exec/tensor.hpp"
#include "fjc/graph/hlo.hpp"

namespace fjc::exec {

/// Reference semantics of an HloGraph: evaluates every node in topological
/// order with the shared scalar operations and the canonical reduction order.
/// `inputs` follow graph.parameters(). Throws InputMismatch.
std::vector<TensorBuffer> interpret_hlo(const graph::HloGraph& graph,
                                        std::span<const TensorBuffer> inputs);

/// Throws InputMismatch naming the first parameter whose type differs.
void check_inputs(std::span<const graph::TensorType> expected,
                  std::span<const TensorBuffer> inputs);

struct CompareReport {
  bool ok = true;
  double max_rel_err = 0.0;
  // Worst element; -1 when all outputs agree exactly.
  int output = -1;
  std::int64_t index = -1;
  std::string message;
};

/// tolerance == 0 demands bitwise equality; otherwise every element must be
/// within `tolerance` relative error. Throws TypeMismatch when the output
/// lists differ in count, dtype or shape.
CompareReport compare(std::span<const TensorBuffer> a, std::span<const TensorBuffer> b,
                      double tolerance);

}  // namespace fjc::exec
