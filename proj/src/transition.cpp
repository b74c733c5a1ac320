#include "genparse/transition.hpp"

#include <algorithm>
#include <sstream>

namespace genparse {

const char* op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::kReduceL: return "RL";
    case OpKind::kReduceR: return "RR";
    case OpKind::kGen: return "GEN";
  }
  return "?";
}

std::string format_ops(const TargetSequence& ops) {
  std::string out;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (i) out += ' ';
    if (ops[i].is_gen()) {
      out += "GEN(" + ops[i].word + ")";
    } else {
      out += op_kind_name(ops[i].kind);
    }
  }
  return out;
}

TargetSequence parse_ops(const std::string& text) {
  TargetSequence ops;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    if (tok == "RL") {
      ops.push_back(ParserOp::reduce_l());
    } else if (tok == "RR") {
      ops.push_back(ParserOp::reduce_r());
    } else if (tok.size() > 5 && tok.compare(0, 4, "GEN(") == 0 && tok.back() == ')') {
      ops.push_back(ParserOp::gen(tok.substr(4, tok.size() - 5)));
    } else {
      throw Error("unrecognized op token '" + tok + "'");
    }
  }
  return ops;
}

void check_well_formed(const DependencyTree& tree) {
  const int n = static_cast<int>(tree.size());
  if (tree.heads.size() != tree.words.size()) {
    throw Error("tree has " + std::to_string(tree.words.size()) + " words but " +
                std::to_string(tree.heads.size()) + " heads");
  }
  for (int i = 1; i <= n; ++i) {
    const int h = tree.head(i);
    if (h < 0 || h > n || h == i) {
      throw Error("word " + std::to_string(i) + " has invalid head " + std::to_string(h));
    }
  }
  // Walking up from any word must reach the root within n steps.
  for (int i = 1; i <= n; ++i) {
    int cur = i;
    for (int steps = 0; cur != 0; ++steps) {
      if (steps > n) throw Error("head map contains a cycle through word " + std::to_string(i));
      cur = tree.head(cur);
    }
  }
}

int count_root_children(const DependencyTree& tree) {
  int count = 0;
  for (int h : tree.heads) count += (h == 0);
  return count;
}

namespace {

bool dominates(const DependencyTree& tree, int ancestor, int node) {
  while (node != 0) {
    if (node == ancestor) return true;
    node = tree.head(node);
  }
  return ancestor == 0;
}

}  // namespace

bool is_projective(const DependencyTree& tree) {
  check_well_formed(tree);
  const int n = static_cast<int>(tree.size());
  for (int d = 1; d <= n; ++d) {
    const int h = tree.head(d);
    const int lo = std::min(h, d), hi = std::max(h, d);
    for (int k = lo + 1; k < hi; ++k) {
      if (!dominates(tree, h, k)) return false;
    }
  }
  return true;
}

bool ValidOps::allows(OpKind kind) const {
  switch (kind) {
    case OpKind::kGen: return gen;
    case OpKind::kReduceL: return reduce_l;
    case OpKind::kReduceR: return reduce_r;
  }
  return false;
}

StackState::StackState() : stack_{StackItem{0}} {}

ValidOps valid_ops(const StackState& state, std::size_t max_words) {
  ValidOps v;
  if (state.terminal()) {
    v.complete = true;
    return v;
  }
  v.gen = state.generated().size() < max_words;
  v.reduce_l = state.non_root_depth() >= 2;
  v.reduce_r = state.depth() >= 2;
  return v;
}

StackState apply_op(const StackState& state, const ParserOp& op, std::size_t max_words) {
  const ValidOps valid = valid_ops(state, max_words);
  if (valid.complete) throw Error("cannot apply an op to a terminal state");
  if (!valid.allows(op.kind)) {
    std::string why;
    switch (op.kind) {
      case OpKind::kGen:
        why = "GEN exceeds the word limit of " + std::to_string(max_words);
        break;
      case OpKind::kReduceL:
        why = "REDUCE_L needs two non-root stack elements, have " +
              std::to_string(state.non_root_depth());
        break;
      case OpKind::kReduceR:
        why = "REDUCE_R needs two stack elements, have " + std::to_string(state.depth());
        break;
    }
    throw Error(why);
  }
  if (op.is_gen() && op.word.empty()) throw Error("GEN requires a word");
  if (!op.is_gen() && !op.word.empty()) throw Error("REDUCE ops carry no word");

  StackState next = state;
  next.ops_.push_back(op);
  switch (op.kind) {
    case OpKind::kGen:
      next.generated_.push_back(op.word);
      next.stack_.push_back(StackItem{static_cast<int>(next.generated_.size())});
      break;
    case OpKind::kReduceL: {
      const StackItem top = next.stack_.back();
      next.stack_.pop_back();
      const StackItem second = next.stack_.back();
      next.stack_.pop_back();
      next.arcs_.push_back(Arc{top.root, second.root});
      next.stack_.push_back(top);
      break;
    }
    case OpKind::kReduceR: {
      const StackItem top = next.stack_.back();
      next.stack_.pop_back();
      const StackItem second = next.stack_.back();
      next.arcs_.push_back(Arc{second.root, top.root});
      break;
    }
  }
  return next;
}

DependencyTree execute(const TargetSequence& ops) {
  StackState state;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    try {
      state = apply_op(state, ops[i]);
    } catch (const Error& e) {
      throw SequenceError("op " + std::to_string(i) + " (" + format_ops({ops[i]}) +
                              "): " + e.what(),
                          static_cast<long>(i));
    }
  }
  if (!state.terminal()) throw SequenceError("incomplete sequence", -1);

  DependencyTree tree;
  tree.words = state.generated();
  tree.heads.assign(tree.words.size(), -1);
  for (const Arc& arc : state.arcs()) tree.heads[arc.dependent - 1] = arc.head;
  return tree;
}

TargetSequence oracle(const DependencyTree& tree) {
  check_well_formed(tree);
  if (tree.size() == 0) throw Error("empty tree");
  if (count_root_children(tree) != 1) throw Error("multi-root");
  if (!is_projective(tree)) throw Error("non-projective");

  const int n = static_cast<int>(tree.size());
  std::vector<int> pending(n + 1, 0);  // unattached dependents per word
  for (int i = 1; i <= n; ++i) ++pending[tree.head(i)];

  TargetSequence ops;
  ops.reserve(2 * n);
  std::vector<int> stack{0};
  int next_word = 1;
  while (!(stack.size() == 1 && next_word > n)) {
    if (stack.size() >= 2) {
      const int top = stack.back();
      const int second = stack[stack.size() - 2];
      if (second != 0 && tree.head(second) == top && pending[second] == 0) {
        ops.push_back(ParserOp::reduce_l());
        stack.pop_back();
        stack.back() = top;
        --pending[top];
        continue;
      }
      if (tree.head(top) == second && pending[top] == 0) {
        ops.push_back(ParserOp::reduce_r());
        stack.pop_back();
        --pending[second];
        continue;
      }
    }
    if (next_word > n) throw Error("non-projective");
    ops.push_back(ParserOp::gen(tree.words[next_word - 1]));
    stack.push_back(next_word++);
  }
  return ops;
}

std::vector<std::string> extract_summary(const TargetSequence& ops) {
  std::vector<std::string> words;
  for (const ParserOp& op : ops) {
    if (op.is_gen()) words.push_back(op.word);
  }
  return words;
}

}  // namespace genparse
