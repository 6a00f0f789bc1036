#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fjc/exec/tensor.hpp"
#include "fjc/ir/fj.hpp"
#include "fjc/runtime/pool.hpp"

namespace fjc::exec {

struct ExecOptions {
  bool checked = false;  // bounds-check every load and store
};

struct ExecutionReport {
  std::vector<TensorBuffer> outputs;
  double wall_seconds = 0.0;
  runtime::WorkerCounters counters;
  std::string mode;  // "parallel" or "serial"
  int workers = 1;
  bool checked = false;
  std::int64_t max_depth = 0;  // deepest call-activation chain
};

struct Program;

/// A verified module compiled to register bytecode. Compilation happens once;
/// `run` may be called repeatedly and from one thread at a time.
class Executable {
 public:
  /// Throws VerifyError, or KernelMissing when a reachable callee has no body.
  explicit Executable(const ir::FjModule& module, ExecOptions options = {});
  ~Executable();
  Executable(Executable&&) noexcept;
  Executable& operator=(Executable&&) noexcept;

  const ir::FjFunction& entry() const;
  /// Types of the non-`out` entry parameters, in order.
  std::vector<graph::TensorType> input_types() const;
  /// Types of the `out` entry parameters, in order.
  std::vector<graph::TensorType> output_types() const;

  /// With a pool, detached blocks and pfor leaves become pool tasks. Without
  /// one, everything runs depth-first on the calling thread, which is the
  /// serial projection. Throws InputMismatch, or OutOfBounds in checked mode.
  ExecutionReport run(std::span<const TensorBuffer> inputs, runtime::TaskPool* pool) const;

  /// Number of bytecode instructions across all compiled functions.
  std::size_t code_size() const;

 private:
  std::unique_ptr<Program> program_;
  ir::FjFunction entry_;
  ExecOptions options_;
};

/// Compiles and runs `module` on `pool`.
ExecutionReport execute_fj(const ir::FjModule& module, std::span<const TensorBuffer> inputs,
                           runtime::TaskPool& pool, ExecOptions options = {});

/// Serial backend: runs the serial elision of `module` on the calling thread.
ExecutionReport execute_serial(const ir::FjModule& module, std::span<const TensorBuffer> inputs,
                               ExecOptions options = {});

}  // namespace fjc::exec
