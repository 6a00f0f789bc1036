#include <map>
#include <set>

#include "fjc/graph_opt/passes.hpp"

namespace fjc::graph_opt {

using graph::HloGraph;
using graph::HloNode;
using graph::OpKind;

namespace {

int resolve(const std::map<int, int>& redirect, int id) {
  auto it = redirect.find(id);
  return it == redirect.end() ? id : it->second;
}

// Fused regions are compared without the pre-fusion member ids.
bool equivalent(const graph::Attrs& a, const graph::Attrs& b) {
  if (!a.region || !b.region) return a == b;
  const auto& ma = a.region->members;
  const auto& mb = b.region->members;
  if (a.region->fused_type != b.region->fused_type || ma.size() != mb.size()) return false;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    if (ma[i].kind != mb[i].kind || ma[i].operands != mb[i].operands) return false;
  }
  return true;
}

// One round: group nodes by their key under the current redirection and point
// every member of a group at its lowest id. Returns false when nothing merged.
bool merge_round(HloGraph& g) {
  std::map<std::pair<OpKind, std::vector<int>>, std::vector<int>> buckets;
  for (const auto& [id, node] : g.nodes()) {
    if (node.kind == OpKind::Parameter) continue;
    buckets[{node.kind, node.operands}].push_back(id);
  }
  std::map<int, int> redirect;
  for (const auto& [key, ids] : buckets) {
    std::vector<int> reps;  // ascending, so each class keeps its lowest id
    for (int id : ids) {
      const HloNode& node = g.node(id);
      bool merged = false;
      for (int rep : reps) {
        if (equivalent(g.node(rep).attrs, node.attrs) && g.node(rep).type == node.type) {
          redirect[id] = rep;
          merged = true;
          break;
        }
      }
      if (!merged) reps.push_back(id);
    }
  }
  if (redirect.empty()) return false;
  for (const auto& [dead, rep] : redirect) g.erase(dead);
  for (const auto& [id, node] : g.nodes()) {
    HloNode& n = g.mutable_node(id);
    for (int& op : n.operands) op = resolve(redirect, op);
  }
  std::vector<int> outputs = g.outputs();
  for (int& o : outputs) o = resolve(redirect, o);
  g.set_outputs(std::move(outputs));
  return true;
}

}  // namespace

HloGraph cse(const HloGraph& graph) {
  HloGraph g = graph;
  while (merge_round(g)) {
  }
  return g;
}

HloGraph dce(const HloGraph& graph) {
  std::set<int> live;
  std::vector<int> work(graph.outputs().begin(), graph.outputs().end());
  while (!work.empty()) {
    const int id = work.back();
    work.pop_back();
    if (!live.insert(id).second) continue;
    for (int op : graph.node(id).operands) work.push_back(op);
  }
  HloGraph g = graph;
  for (const auto& [id, node] : graph.nodes()) {
    if (!live.count(id) && node.kind != OpKind::Parameter) g.erase(id);
  }
  return g;
}

}  // namespace fjc::graph_opt
