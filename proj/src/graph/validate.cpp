#include <functional>
#include <queue>
#include <set>
#include <sstream>

#include "fjc/graph/hlo.hpp"

namespace fjc::graph {

namespace {

std::string node_name(int id) { return "%" + std::to_string(id); }

}  // namespace

std::vector<Diagnostic> validate(const HloGraph& graph) {
  std::vector<Diagnostic> diags;
  auto report = [&](int node, std::string rule, std::string message) {
    diags.push_back(Diagnostic{node, std::move(rule), std::move(message)});
  };

  for (const auto& [id, node] : graph.nodes()) {
    if (node.id != id) report(id, "IdMismatch", "node stored under a different id");
    for (int op : node.operands) {
      if (!graph.contains(op)) {
        report(id, "UnresolvedOperand", node_name(id) + " uses undefined " + node_name(op));
      }
    }
    const int want = arity(node.kind);
    if (want >= 0 && static_cast<int>(node.operands.size()) != want) {
      report(id, "ArityMismatch",
             node_name(id) + " " + std::string(to_string(node.kind)) + " takes " +
                 std::to_string(want) + " operands, has " + std::to_string(node.operands.size()));
    }
    if (node.kind == OpKind::Parameter && !node.operands.empty()) {
      report(id, "ParameterHasOperands", node_name(id) + " is a parameter with operands");
    }
  }

  for (int out : graph.outputs()) {
    if (!graph.contains(out)) report(out, "UnresolvedOutput", "output " + node_name(out) + " undefined");
  }
  std::set<int> params;
  for (int p : graph.parameters()) {
    const HloNode* n = graph.find(p);
    if (!n || n->kind != OpKind::Parameter) {
      report(p, "BadParameter", node_name(p) + " listed as parameter but is not one");
    }
    if (!params.insert(p).second) report(p, "BadParameter", node_name(p) + " listed twice");
  }
  for (const auto& [id, node] : graph.nodes()) {
    if (node.kind == OpKind::Parameter && !params.count(id)) {
      report(id, "BadParameter", node_name(id) + " missing from the parameter list");
    }
  }

  // Cycle detection: iterative DFS with colors; a back edge names its target.
  std::map<int, int> color;  // 0 white, 1 grey, 2 black
  std::set<int> cyclic;
  for (const auto& [root, unused] : graph.nodes()) {
    if (color[root] != 0) continue;
    std::vector<std::pair<int, std::size_t>> stack{{root, 0}};
    color[root] = 1;
    while (!stack.empty()) {
      auto& [id, next] = stack.back();
      const HloNode& node = graph.node(id);
      if (next < node.operands.size()) {
        const int op = node.operands[next++];
        if (!graph.contains(op)) continue;
        if (color[op] == 1) {
          cyclic.insert(op);
        } else if (color[op] == 0) {
          color[op] = 1;
          stack.emplace_back(op, 0);
        }
      } else {
        color[id] = 2;
        stack.pop_back();
      }
    }
  }
  for (int id : cyclic) report(id, "cycle", "cycle at " + node_name(id));

  // Type checks only where every operand resolves.
  for (const auto& [id, node] : graph.nodes()) {
    std::vector<TensorType> types;
    bool resolved = true;
    for (int op : node.operands) {
      const HloNode* o = graph.find(op);
      if (!o) {
        resolved = false;
        break;
      }
      types.push_back(o->type);
    }
    if (!resolved) continue;
    try {
      TensorType inferred = infer_shape(node.kind, types, node.attrs);
      if (inferred != node.type) {
        report(id, "TypeMismatch",
               node_name(id) + " declared " + node.type.to_string() + " but infers " +
                   inferred.to_string());
      }
    } catch (const Error& e) {
      report(id, std::string(to_string(e.kind())), node_name(id) + ": " + e.what());
    }
  }
  return diags;
}

void validate_or_throw(const HloGraph& graph) {
  auto diags = validate(graph);
  if (diags.empty()) return;
  std::ostringstream os;
  os << diags.size() << " diagnostic(s)";
  for (const auto& d : diags) os << "\n  " << d.rule << ": " << d.message;
  throw Error(ErrorKind::ValidationError, os.str());
}

std::vector<int> topo_order(const HloGraph& graph) {
  std::map<int, int> pending;
  std::map<int, std::vector<int>> users;
  for (const auto& [id, node] : graph.nodes()) {
    int count = 0;
    for (int op : node.operands) {
      if (!graph.contains(op)) {
        throw Error(ErrorKind::ValidationError, node_name(id) + " uses undefined " + node_name(op));
      }
      users[op].push_back(id);
      ++count;
    }
    pending[id] = count;
  }
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (const auto& [id, count] : pending) {
    if (count == 0) ready.push(id);
  }
  std::vector<int> order;
  order.reserve(graph.size());
  while (!ready.empty()) {
    const int id = ready.top();
    ready.pop();
    order.push_back(id);
    for (int user : users[id]) {
      if (--pending[user] == 0) ready.push(user);
    }
  }
  if (order.size() != graph.size()) {
    for (const auto& [id, count] : pending) {
      if (count > 0) throw Error(ErrorKind::CycleError, "cycle through " + node_name(id));
    }
  }
  return order;
}

}  // namespace fjc::graph
