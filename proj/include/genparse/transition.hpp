#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace genparse {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OpKind : int { kReduceL = 0, kReduceR = 1, kGen = 2 };

inline constexpr int kNumOpKinds = 3;

const char* op_kind_name(OpKind kind);

struct ParserOp {
  OpKind kind = OpKind::kGen;
  std::string word;  // empty unless kind == kGen

  static ParserOp gen(std::string w) { return {OpKind::kGen, std::move(w)}; }
  static ParserOp reduce_l() { return {OpKind::kReduceL, {}}; }
  static ParserOp reduce_r() { return {OpKind::kReduceR, {}}; }

  bool is_gen() const { return kind == OpKind::kGen; }
  bool operator==(const ParserOp&) const = default;
};

using TargetSequence = std::vector<ParserOp>;

// Space-separated `GEN(word)`, `RL`, `RR` tokens.
std::string format_ops(const TargetSequence& ops);
TargetSequence parse_ops(const std::string& text);

// Unlabeled dependency tree. Positions are 1-based; head 0 is the root node.
struct DependencyTree {
  std::vector<std::string> words;
  std::vector<int> heads;  // heads[i] is the head of word i + 1

  std::size_t size() const { return words.size(); }
  int head(int position) const { return heads[position - 1]; }
  bool operator==(const DependencyTree&) const = default;
};

// Throws if heads are out of range or the head map has a cycle.
void check_well_formed(const DependencyTree& tree);
int count_root_children(const DependencyTree& tree);
bool is_projective(const DependencyTree& tree);

// Partial tree on the stack. The bottom element is always the root node
// (root == 0); other elements are identified by their head word position.
struct StackItem {
  int root = 0;
  bool operator==(const StackItem&) const = default;
};

struct Arc {
  int head = 0;
  int dependent = 0;
  bool operator==(const Arc&) const = default;
};

struct ValidOps {
  bool gen = false;
  bool reduce_l = false;
  bool reduce_r = false;
  bool complete = false;

  bool allows(OpKind kind) const;
  bool any() const { return gen || reduce_l || reduce_r; }
};

class StackState {
 public:
  StackState();

  const std::vector<StackItem>& stack() const { return stack_; }
  const std::vector<std::string>& generated() const { return generated_; }
  const TargetSequence& ops() const { return ops_; }
  const std::vector<Arc>& arcs() const { return arcs_; }

  std::size_t depth() const { return stack_.size(); }
  std::size_t non_root_depth() const { return stack_.size() - 1; }
  bool terminal() const { return stack_.size() == 1 && !generated_.empty(); }

  // Position of the head word of the i-th element from the top (0 = top).
  int peek(std::size_t from_top) const { return stack_[stack_.size() - 1 - from_top].root; }

 private:
  friend StackState apply_op(const StackState& state, const ParserOp& op,
                             std::size_t max_words);

  std::vector<StackItem> stack_;
  std::vector<std::string> generated_;
  TargetSequence ops_;
  std::vector<Arc> arcs_;
};

inline constexpr std::size_t kUnboundedWords = static_cast<std::size_t>(-1);

ValidOps valid_ops(const StackState& state, std::size_t max_words = kUnboundedWords);

// Returns the successor state; throws Error naming the violated constraint.
StackState apply_op(const StackState& state, const ParserOp& op,
                    std::size_t max_words = kUnboundedWords);

// Thrown by execute(); carries the index of the failing op, or -1 when the
// sequence ends before reaching a terminal state.
class SequenceError : public Error {
 public:
  SequenceError(const std::string& what, long index) : Error(what), index_(index) {}
  long index() const { return index_; }

 private:
  long index_;
};

DependencyTree execute(const TargetSequence& ops);
TargetSequence oracle(const DependencyTree& tree);
std::vector<std::string> extract_summary(const TargetSequence& ops);

}  // namespace genparse
