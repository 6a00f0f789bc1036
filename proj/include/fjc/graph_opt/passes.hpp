#pragma once

#include <functional>
#include <string_view>

#include "fjc/graph/hlo.hpp"

namespace fjc::graph_opt {

/// Merges non-parameter nodes with identical (kind, attrs, operands); the
/// lowest id of each class survives and all uses are redirected to it.
graph::HloGraph cse(const graph::HloGraph& graph);

/// Removes nodes not reachable from the outputs. Parameters are kept so the
/// graph signature never changes.
graph::HloGraph dce(const graph::HloGraph& graph);

/// Collapses maximal single-exit regions of same-shape elementwise nodes (and
/// broadcasts of f32 scalars) into Fused nodes. A fused node takes its root's
/// id. Regions of a single member are left alone.
graph::HloGraph fuse_elementwise(const graph::HloGraph& graph);

/// True when `node` may become a member of a fused region.
bool is_fusible(const graph::HloGraph& graph, const graph::HloNode& node);

struct HloPipelineConfig {
  int max_iterations = 10;
  /// Called with the pass name and its result after every pass application.
  std::function<void(std::string_view, const graph::HloGraph&)> on_pass;
};

/// cse -> fuse_elementwise -> dce until an iteration changes nothing.
/// Throws ValidationError on invalid input, FixpointNotReached when
/// `max_iterations` iterations all changed the graph.
graph::HloGraph run_hlo_pipeline(const graph::HloGraph& graph, const HloPipelineConfig& config = {});

}  // namespace fjc::graph_opt
