#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "fjc/ir/fj.hpp"

namespace fjc::opt {

/// Work estimate in abstract units (1 unit is roughly one scalar op).
/// Cost table: arith/index/fma/itof 1, load/store 2, exp/tanh/sigmoid 10,
/// call 25 plus the callee's estimate. Loops multiply by their static trip
/// count; `breakdown` holds the weighted count of each class, and
/// units = sum(breakdown[class] * cost(class)).
struct CostEstimate {
  std::int64_t units = 0;
  std::map<std::string, std::int64_t> breakdown;
  bool lower_bound = false;  // some trip count or callee cost was unknown
};

inline constexpr std::int64_t kArithCost = 1;
inline constexpr std::int64_t kMemoryCost = 2;
inline constexpr std::int64_t kTranscendentalCost = 10;
inline constexpr std::int64_t kCallCost = 25;
inline constexpr std::int64_t kUnknownCalleeCost = 1000;

/// With `module`, non-opaque callees are costed from their bodies and
/// opaque ones from their precomputed `cost`; unknown callees cost 1000.
CostEstimate estimate_cost(const ir::Region& region, const ir::FjModule* module = nullptr);

struct PassConfig {
  std::optional<std::int64_t> grain_override;
  std::int64_t spawn_cost = 200;   // S
  double serialize_factor = 8.0;   // sigma
  int workers_hint = 1;            // P

  /// Throws InvalidAttribute unless S > 0, sigma > 0, P >= 1 and any grain
  /// override is positive.
  void validate() const;
};

/// clamp(ceil(n / (8 * workers)), 1, 2048)
std::int64_t default_grain(std::int64_t trip, int workers);

// Every pass leaves opaque and declared functions untouched.

/// Replaces calls to non-opaque inline candidates with their bodies and drops
/// inline candidates that are no longer referenced. Calls to callees with
/// allocations stay in place unless they sit at the caller's top level.
/// Throws RecursionDetected when inline candidates call each other in a cycle.
ir::FjModule inline_calls(const ir::FjModule& module);

/// Folds operations whose inputs are all constant, substitutes registers that
/// hold a single constant value, turns constant branches into jumps, removes
/// empty loops, unreachable blocks and dead pure instructions.
ir::FjModule const_prop(const ir::FjModule& module);

/// Merges adjacent pfor nests with identical bounds when the second reads the
/// first's outputs only at the same index, then demotes intermediate buffers
/// that no longer need memory to scalars.
ir::FjModule fuse_pfors(const ir::FjModule& module);

/// Splits each pfor with unset grain into an outer pfor over chunks (grain 1,
/// annotated with the strip) and an inner serial loop of at most g iterations.
ir::FjModule strip_mine(const ir::FjModule& module, const PassConfig& config);

/// Replaces parallel constructs whose total estimated work is below
/// sigma * S with their serial elision.
ir::FjModule serialize_small_tasks(const ir::FjModule& module, const PassConfig& config);

/// Turns each strip-mined pfor over c > 1 chunks into a call to a recursive
/// helper that detaches the left half of its chunk range, recurses on the
/// right half and syncs. One chunk becomes a plain serial loop.
ir::FjModule loop_spawn(const ir::FjModule& module);

enum class Mode { ExposedLate, OpaqueEarly };

std::string_view to_string(Mode mode);

struct PipelineOptions {
  PassConfig config;
  Mode mode = Mode::ExposedLate;
  /// Called with the pass name and its result after every pass.
  std::function<void(std::string_view, const ir::FjModule&)> on_pass;
};

/// ExposedLate: inline_calls, const_prop, fuse_pfors, strip_mine,
/// serialize_small_tasks, loop_spawn. OpaqueEarly: const_prop only.
/// The result is verified.
ir::FjModule run_fj_pipeline(const ir::FjModule& module, const PipelineOptions& options);

}  // namespace fjc::opt
