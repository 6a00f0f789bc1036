#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fjc/exec/tensor.hpp"
#include "fjc/kernels/kernels.hpp"
#include "fjc/opt/passes.hpp"

namespace fjc::bench {

inline constexpr int kSchemaVersion = 1;

struct BenchConfig {
  std::vector<std::string> benchmarks;  // empty: the whole suite
  std::vector<opt::Mode> modes{opt::Mode::ExposedLate, opt::Mode::OpaqueEarly};
  int threads = 1;
  int warmup = 2;
  int repeat = 10;
  std::uint64_t seed = 1;
  opt::PassConfig passes;  // workers_hint is taken from `threads`
  std::shared_ptr<const kernels::KernelLibrary> kernels;
  bool checked = false;
  bool pin = true;
  double cv_flag = 0.20;

  /// Throws InvalidAttribute.
  void validate() const;
};

struct BenchResult {
  std::string benchmark;
  opt::Mode mode = opt::Mode::ExposedLate;
  int threads = 1;
  int repeats = 0;
  bool correct = false;
  std::string error;  // why the correctness gate failed
  double mean_seconds = 0.0;
  double stddev_seconds = 0.0;
  double cv = 0.0;
  bool high_variance = false;  // cv above the configured flag
  std::vector<double> times_seconds;
  std::int64_t spawns = 0;     // per run
  double steals = 0.0;         // mean per timed run
  std::int64_t allocs = 0;     // static allocations in the compiled module
  std::string output_digest;
  std::optional<double> ratio;  // mean(opaque-early) / mean(exposed-late)
  std::vector<exec::TensorBuffer> outputs;  // from the correctness gate
};

struct Environment {
  int physical_cores = 1;
  int hardware_threads = 1;
  bool pinned = false;
  std::string compiler;
};

struct BenchReport {
  Environment environment;
  BenchConfig config;
  std::vector<BenchResult> results;
  std::optional<double> geomean_ratio;

  bool all_correct() const;
};

Environment detect_environment();

/// For every (benchmark, mode): compile, run once and compare bitwise with
/// the reference interpreter, then `warmup` discarded and `repeat` timed runs
/// that must all reproduce the reference. A failing cell gets no timings.
/// Progress lines go to `log` when given.
BenchReport run_bench(const BenchConfig& config, std::ostream* log = nullptr);

/// Versioned JSON document (`schema: 1`).
nlohmann::json to_json(const BenchReport& report);

/// Fields whose values depend on timing or scheduling.
const std::vector<std::string>& timing_fields();
/// Copy of a report document with every timing field removed.
nlohmann::json strip_timing(const nlohmann::json& report);

/// Benchmark columns, mode rows and a Ratio row, rendered from the JSON
/// document alone.
std::string render_table(const nlohmann::json& report);

}  // namespace fjc::bench
