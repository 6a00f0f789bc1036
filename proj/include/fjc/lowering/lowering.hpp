#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string_view>

#include "fjc/graph/hlo.hpp"
#include "fjc/graph_opt/passes.hpp"
#include "fjc/ir/fj.hpp"
#include "fjc/kernels/kernels.hpp"
#include "fjc/opt/passes.hpp"

namespace fjc::lowering {

using opt::Mode;

/// Grain used inside precompiled opaque kernels.
inline constexpr std::int64_t kOpaqueKernelGrain = 256;

struct LoweringConfig {
  Mode mode = Mode::ExposedLate;
  int workers = 1;  // P; OpaqueEarly partitioning only
  /// Null means a private library that builds kernels on demand.
  std::shared_ptr<const kernels::KernelLibrary> kernel_library;

  /// Throws InvalidAttribute unless workers >= 1.
  void validate() const;
};

/// Entry function `main` with one parameter per graph parameter followed by
/// one `out` parameter per graph output.
///
/// ExposedLate: every non-library op is a pfor nest over its output index
/// space (grain unset); MatMul, Conv2D and Reduce call linked inline-candidate
/// kernels. OpaqueEarly: the outermost loop of every op is split into exactly
/// P detached chunks with serial inner loops, and library ops call opaque
/// precompiled kernels.
///
/// Throws UnsupportedOp (i32 tensors) or KernelMissing.
ir::FjModule lower_graph(const graph::HloGraph& graph, const LoweringConfig& config);

/// Emits the loop nest of one fused region into `b`: every element evaluates
/// the members in order, loading each external operand at most once, and
/// stores the root into `out`. `operands` are the buffers of the fused node's
/// operands.
void lower_fused(ir::FunctionBuilder& b, const graph::FusedRegion& region, std::span<const int> operands, int out,
                 const LoweringConfig& config);

/// Copies the bodies of every called but undefined kernel from `library`.
/// A callee already present must be identical up to register names.
/// Throws KernelMissing or DuplicateSymbol.
ir::FjModule link_kernels(const ir::FjModule& module, const kernels::KernelLibrary& library);

/// Complete compilation of a graph.
struct CompileOptions {
  LoweringConfig lowering;
  opt::PassConfig passes;
  bool optimize_graph = true;
  std::function<void(std::string_view, const graph::HloGraph&)> on_graph_pass;
  std::function<void(std::string_view, const ir::FjModule&)> on_fj_pass;
};

struct CompileResult {
  graph::HloGraph optimized_graph;
  ir::FjModule lowered;   // before fj-opt
  ir::FjModule module;    // after fj-opt
};

/// run_hlo_pipeline, lower_graph, run_fj_pipeline in the lowering's mode.
CompileResult compile_graph(const graph::HloGraph& graph, const CompileOptions& options);

}  // namespace fjc::lowering
