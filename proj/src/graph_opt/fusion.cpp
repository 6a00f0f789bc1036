#include <algorithm>
#include <map>
#include <memory>
#include <set>

#include "fjc/graph_opt/passes.hpp"

namespace fjc::graph_opt {

using graph::DType;
using graph::FusedOperand;
using graph::FusedRegion;
using graph::HloGraph;
using graph::HloNode;
using graph::OpKind;

bool is_fusible(const HloGraph& graph, const HloNode& node) {
  if (node.type.dtype != DType::F32) return false;
  if (graph::is_elementwise(node.kind)) return true;
  if (node.kind != OpKind::Broadcast || node.operands.size() != 1) return false;
  const HloNode* x = graph.find(node.operands[0]);
  return x && x->type.dtype == DType::F32 && x->type.rank() == 0;
}

HloGraph fuse_elementwise(const HloGraph& graph) {
  const std::vector<int> order = graph::topo_order(graph);
  std::map<int, std::size_t> position;
  for (std::size_t i = 0; i < order.size(); ++i) position[order[i]] = i;
  const auto users = graph::users_of(graph);
  const std::set<int> outputs(graph.outputs().begin(), graph.outputs().end());

  std::set<int> absorbed;
  std::vector<std::vector<int>> regions;  // each sorted by topo position, root last

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int root = *it;
    const HloNode& rn = graph.node(root);
    if (absorbed.count(root) || !graph::is_elementwise(rn.kind) || rn.type.dtype != DType::F32) {
      continue;
    }
    std::set<int> region{root};
    bool grew = true;
    while (grew) {
      grew = false;
      std::set<int> candidates;
      for (int m : region) {
        // Broadcast members keep their scalar operand external.
        if (graph.node(m).kind == OpKind::Broadcast) continue;
        for (int op : graph.node(m).operands) {
          if (!region.count(op)) candidates.insert(op);
        }
      }
      for (int c : candidates) {
        const HloNode& cn = graph.node(c);
        if (absorbed.count(c) || outputs.count(c) || cn.type != rn.type || !is_fusible(graph, cn)) {
          continue;
        }
        auto uit = users.find(c);
        const bool single_exit =
            uit != users.end() && std::all_of(uit->second.begin(), uit->second.end(),
                                              [&](int u) { return region.count(u) != 0; });
        if (single_exit) {
          region.insert(c);
          grew = true;
        }
      }
    }
    if (region.size() < 2) continue;
    std::vector<int> members(region.begin(), region.end());
    std::sort(members.begin(), members.end(),
              [&](int a, int b) { return position[a] < position[b]; });
    absorbed.insert(members.begin(), members.end());
    regions.push_back(std::move(members));
  }

  HloGraph g = graph;
  for (const auto& members : regions) {
    const int root = members.back();
    auto region = std::make_shared<FusedRegion>();
    region->fused_type = graph.node(root).type;
    std::map<int, int> member_index;
    std::vector<int> externals;
    for (int m : members) {
      const HloNode& mn = graph.node(m);
      graph::FusedMember fm{m, mn.kind, {}};
      for (int op : mn.operands) {
        auto mi = member_index.find(op);
        if (mi != member_index.end()) {
          fm.operands.push_back(FusedOperand{false, mi->second});
          continue;
        }
        auto ei = std::find(externals.begin(), externals.end(), op);
        if (ei == externals.end()) {
          externals.push_back(op);
          ei = externals.end() - 1;
        }
        fm.operands.push_back(FusedOperand{true, static_cast<int>(ei - externals.begin())});
      }
      member_index[m] = static_cast<int>(region->members.size());
      region->members.push_back(std::move(fm));
    }
    for (int m : members) g.erase(m);
    HloNode fused;
    fused.id = root;
    fused.kind = OpKind::Fused;
    fused.operands = externals;
    fused.type = region->fused_type;
    fused.attrs.region = std::move(region);
    g.insert(std::move(fused));
  }
  return g;
}

HloGraph run_hlo_pipeline(const HloGraph& graph, const HloPipelineConfig& config) {
  graph::validate_or_throw(graph);
  auto note = [&](std::string_view pass, const HloGraph& g) {
    if (config.on_pass) config.on_pass(pass, g);
  };
  HloGraph current = graph;
  for (int iteration = 0; iteration < config.max_iterations; ++iteration) {
    HloGraph next = cse(current);
    note("cse", next);
    next = fuse_elementwise(next);
    note("fuse_elementwise", next);
    next = dce(next);
    note("dce", next);
    if (next == current) return next;
    current = std::move(next);
  }
  throw Error(ErrorKind::FixpointNotReached,
              "graph still changing after " + std::to_string(config.max_iterations) + " iterations");
}

}  // namespace fjc::graph_opt
