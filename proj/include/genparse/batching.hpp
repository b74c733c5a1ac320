#pragma once

#include <cstddef>
#include <vector>

#include "genparse/graph.hpp"
#include "genparse/transition.hpp"

namespace genparse {

// Input of a composition: a leaf (0 = root node, j = j-th generated word) or
// the result of an earlier composition of the same instance.
struct Operand {
  enum class Kind { kLeaf, kNode };
  Kind kind = Kind::kLeaf;
  int index = 0;
  bool operator==(const Operand&) const = default;
};

// One REDUCE between two word-headed subtrees, numbered in op order. The final
// attachment to the root node is not a composition.
struct CompositionNode {
  Operand head;
  Operand dependent;
  int depth = 1;  // 1 + max depth of node operands; leaves count as 0
};

struct NodeRef {
  int instance = 0;
  int node = 0;
  bool operator==(const NodeRef&) const = default;
};

struct NodeGroup {
  int depth = 1;
  std::vector<NodeRef> members;
};

struct BatchPlan {
  std::vector<std::vector<CompositionNode>> nodes;  // per instance
  std::vector<int> num_leaves;                      // per instance, root included
  std::vector<NodeGroup> groups;                    // increasing depth

  std::size_t num_nodes() const;
};

// Composition nodes of every instance grouped by depth.
BatchPlan plan(const std::vector<TargetSequence>& sequences);
BatchPlan plan(const std::vector<DependencyTree>& trees);

// Runs g = tanh(W [head || dependent] + b) for every node, one matmul per
// group. `leaves[i][j]` is leaf j of instance i. Returns the node values per
// instance in REDUCE order.
template <typename Real>
std::vector<std::vector<Var>> batched_compose(Graph<Real>& g, const BatchPlan& plan,
                                              const std::vector<std::vector<Var>>& leaves,
                                              Parameter<Real>& weight, Parameter<Real>& bias);

// Reference: one matmul per node, instance by instance.
template <typename Real>
std::vector<std::vector<Var>> sequential_compose(Graph<Real>& g, const BatchPlan& plan,
                                                 const std::vector<std::vector<Var>>& leaves,
                                                 Parameter<Real>& weight, Parameter<Real>& bias);

}  // namespace genparse
