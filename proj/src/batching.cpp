#include "genparse/batching.hpp"

#include <algorithm>
#include <string>

namespace genparse {

std::size_t BatchPlan::num_nodes() const {
  std::size_t n = 0;
  for (const auto& inst : nodes) n += inst.size();
  return n;
}

namespace {

// Replays the stack symbolically, tracking which operand each element is.
std::vector<CompositionNode> nodes_of(const TargetSequence& ops, int& num_leaves) {
  std::vector<CompositionNode> out;
  std::vector<Operand> stack{{Operand::Kind::kLeaf, 0}};
  StackState state;
  int words = 0;
  auto depth_of = [&](const Operand& o) {
    return o.kind == Operand::Kind::kLeaf ? 0 : out[o.index].depth;
  };
  for (const ParserOp& op : ops) {
    state = apply_op(state, op);
    if (op.is_gen()) {
      stack.push_back({Operand::Kind::kLeaf, ++words});
      continue;
    }
    const Operand top = stack.back();
    stack.pop_back();
    if (stack.size() == 1) continue;  // attachment to the root is never composed
    const Operand second = stack.back();
    stack.pop_back();
    CompositionNode node;
    node.head = op.kind == OpKind::kReduceL ? top : second;
    node.dependent = op.kind == OpKind::kReduceL ? second : top;
    node.depth = 1 + std::max(depth_of(node.head), depth_of(node.dependent));
    stack.push_back({Operand::Kind::kNode, static_cast<int>(out.size())});
    out.push_back(node);
  }
  if (!state.terminal()) throw Error("cannot plan an incomplete sequence");
  num_leaves = words + 1;
  return out;
}

}  // namespace

BatchPlan plan(const std::vector<TargetSequence>& sequences) {
  BatchPlan p;
  int max_depth = 0;
  for (const auto& ops : sequences) {
    int leaves = 0;
    p.nodes.push_back(nodes_of(ops, leaves));
    p.num_leaves.push_back(leaves);
    for (const auto& n : p.nodes.back()) max_depth = std::max(max_depth, n.depth);
  }
  p.groups.resize(max_depth);
  for (int d = 0; d < max_depth; ++d) p.groups[d].depth = d + 1;
  for (std::size_t i = 0; i < p.nodes.size(); ++i) {
    for (std::size_t k = 0; k < p.nodes[i].size(); ++k) {
      p.groups[p.nodes[i][k].depth - 1].members.push_back(
          {static_cast<int>(i), static_cast<int>(k)});
    }
  }
  return p;
}

BatchPlan plan(const std::vector<DependencyTree>& trees) {
  std::vector<TargetSequence> seqs;
  seqs.reserve(trees.size());
  for (const auto& t : trees) seqs.push_back(oracle(t));
  return plan(seqs);
}

namespace {

void check_leaves(const BatchPlan& plan, const std::vector<std::vector<Var>>& leaves) {
  if (leaves.size() != plan.nodes.size()) {
    throw ShapeError("compose: " + std::to_string(leaves.size()) + " leaf lists for " +
                     std::to_string(plan.nodes.size()) + " instances");
  }
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (static_cast<int>(leaves[i].size()) != plan.num_leaves[i]) {
      throw ShapeError("compose: instance " + std::to_string(i) + " has " +
                       std::to_string(leaves[i].size()) + " leaves, plan expects " +
                       std::to_string(plan.num_leaves[i]));
    }
  }
}

Var resolve(const Operand& o, const std::vector<Var>& leaves, const std::vector<Var>& done) {
  return o.kind == Operand::Kind::kLeaf ? leaves[o.index] : done[o.index];
}

}  // namespace

template <typename Real>
std::vector<std::vector<Var>> batched_compose(Graph<Real>& g, const BatchPlan& plan,
                                              const std::vector<std::vector<Var>>& leaves,
                                              Parameter<Real>& weight, Parameter<Real>& bias) {
  check_leaves(plan, leaves);
  std::vector<std::vector<Var>> out(plan.nodes.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i].resize(plan.nodes[i].size());
  const Var w = g.param(weight);
  const Var b = g.param(bias);
  for (const NodeGroup& group : plan.groups) {
    std::vector<Var> inputs;
    inputs.reserve(group.members.size());
    for (const NodeRef& m : group.members) {
      const CompositionNode& n = plan.nodes[m.instance][m.node];
      inputs.push_back(g.concat_rows({resolve(n.head, leaves[m.instance], out[m.instance]),
                                      resolve(n.dependent, leaves[m.instance], out[m.instance])}));
    }
    const Var y = g.tanh(g.add(g.matmul(w, g.concat_cols(inputs)), b));
    for (std::size_t c = 0; c < group.members.size(); ++c) {
      const NodeRef& m = group.members[c];
      out[m.instance][m.node] = g.column(y, static_cast<int>(c));
    }
  }
  return out;
}

template <typename Real>
std::vector<std::vector<Var>> sequential_compose(Graph<Real>& g, const BatchPlan& plan,
                                                 const std::vector<std::vector<Var>>& leaves,
                                                 Parameter<Real>& weight, Parameter<Real>& bias) {
  check_leaves(plan, leaves);
  std::vector<std::vector<Var>> out(plan.nodes.size());
  const Var w = g.param(weight);
  const Var b = g.param(bias);
  for (std::size_t i = 0; i < plan.nodes.size(); ++i) {
    for (const CompositionNode& n : plan.nodes[i]) {
      const Var x = g.concat_rows({resolve(n.head, leaves[i], out[i]),
                                   resolve(n.dependent, leaves[i], out[i])});
      out[i].push_back(g.tanh(g.add(g.matmul(w, x), b)));
    }
  }
  return out;
}

template std::vector<std::vector<Var>> batched_compose(Graph<float>&, const BatchPlan&,
                                                       const std::vector<std::vector<Var>>&,
                                                       Parameter<float>&, Parameter<float>&);
template std::vector<std::vector<Var>> batched_compose(Graph<double>&, const BatchPlan&,
                                                       const std::vector<std::vector<Var>>&,
                                                       Parameter<double>&, Parameter<double>&);
template std::vector<std::vector<Var>> sequential_compose(Graph<float>&, const BatchPlan&,
                                                          const std::vector<std::vector<Var>>&,
                                                          Parameter<float>&, Parameter<float>&);
template std::vector<std::vector<Var>> sequential_compose(Graph<double>&, const BatchPlan&,
                                                          const std::vector<std::vector<Var>>&,
                                                          Parameter<double>&, Parameter<double>&);

}  // namespace genparse
