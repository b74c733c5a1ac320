#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "genparse/corpus.hpp"
#include "genparse/graph.hpp"
#include "genparse/transition.hpp"

namespace genparse {

struct ModelConfig {
  int hidden_size = 256;
  int embed_size = 0;  // 0: same as hidden_size
  int encoder_layers = 2;
  int max_source = 100;

  int embed() const { return embed_size > 0 ? embed_size : hidden_size; }
};

// Union of the output vocabulary and the source tokens it lacks. Extended ids
// [0, V) are output-vocabulary ids; id V + j is the j-th out-of-vocabulary
// source token in order of first occurrence.
struct SourceVocab {
  std::vector<std::string> tokens;
  std::vector<int> extended_ids;  // per source position
  std::vector<std::string> oov_words;
  int output_size = 0;

  SourceVocab() = default;
  SourceVocab(const std::vector<std::string>& source, const Vocabulary& output);

  int extended_size() const { return output_size + static_cast<int>(oov_words.size()); }
  // -1 when the word is neither in the output vocabulary nor in the source.
  int extended_id(const std::string& word, const Vocabulary& output) const;
  std::vector<int> positions_of(int extended_id) const;
};

// P(w) = lambda * P_vocab(w) + (1 - lambda) * sum of attention over the
// source positions holding w, over the extended vocabulary.
template <typename Real>
std::vector<Real> mix_word_distribution(Real lambda, std::span<const Real> p_vocab,
                                        std::span<const Real> attention,
                                        const SourceVocab& vocab);

template <typename Real>
struct SourceContext {
  SourceVocab vocab;
  std::vector<Var> states;  // h_i^x, 2H each
  Var states_matrix;        // 2H x L
  Var projected;            // W^e h^x, A x L
};

template <typename Real>
struct StackEntry {
  Var rep;                 // composed subtree vector g
  LstmState<Real> tree;    // tree LSTM state after consuming rep
};

template <typename Real>
struct DecoderState {
  std::vector<StackEntry<Real>> stack;  // bottom is the root node
  LstmState<Real> seq;                  // h^y
  LstmState<Real> history;              // h^O
  StackState symbolic;
  int words_consumed = 0;               // steps f_decoder_seq has been unrolled

  Var tree_h() const { return stack.back().tree.h; }
};

template <typename Real>
struct StepOutputs {
  Var attention;       // L x 1
  Var context;         // c_t^x, 2H x 1
  Var op_log_probs;    // 3 x 1 in OpKind order
  Var switch_prob;     // lambda, 1 x 1
  Var vocab_probs;     // P~, V x 1
};

template <typename Real>
struct JointDistribution {
  Real reduce_l = 0;
  Real reduce_r = 0;
  std::vector<Real> gen;  // per extended word id

  Real prob(OpKind kind, int word = -1) const;
  Real total() const;
};

template <typename Real>
struct LossTerms {
  Var op;    // -sum log P(op)
  Var word;  // -sum over GEN steps of log P(word)
  Var total;
};

// Externally computed node values for teacher forcing; see batching.hpp.
template <typename Real>
struct TeacherInputs {
  const std::vector<Var>* leaves = nullptr;        // [0] root, [j] word j
  const std::vector<Var>* compositions = nullptr;  // one per REDUCE, in order
};

struct TeacherStats {
  long op_correct = 0, op_total = 0;
  long word_correct = 0, word_total = 0;
  long unknown_words = 0;  // gold words scored through <unk>
};

template <typename Real>
struct StepTrace {
  std::vector<Real> tree_h, seq_h, history_h;
  std::size_t stack_depth = 0;
  int words_consumed = 0;
};

template <typename Real>
class Model {
 public:
  Model(const ModelConfig& config, Vocabulary input_vocab, Vocabulary output_vocab);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  const Vocabulary& input_vocab() const { return input_vocab_; }
  const Vocabulary& output_vocab() const { return output_vocab_; }
  ParameterStore<Real>& params() { return params_; }
  const ParameterStore<Real>& params() const { return params_; }

  SourceContext<Real> encode(Graph<Real>& g, const std::vector<std::string>& source) const;

  Var compose(Graph<Real>& g, Var head, Var dependent) const;
  Var word_embedding(Graph<Real>& g, const std::string& word) const;
  Var root_embedding(Graph<Real>& g) const;
  Parameter<Real>& compose_weight() const { return *compose_w_; }
  Parameter<Real>& compose_bias() const { return *compose_b_; }

  // h^T by unrolling the tree LSTM over `reps` from its initial state.
  Var tree_state_from_scratch(Graph<Real>& g, const std::vector<Var>& reps) const;
  // h^y by unrolling the sequence LSTM over the word embeddings.
  Var seq_state_from_scratch(Graph<Real>& g, const std::vector<std::string>& words) const;
  Var history_state_from_scratch(Graph<Real>& g, const std::vector<OpKind>& ops) const;

  DecoderState<Real> initial_state(Graph<Real>& g) const;
  // Applies `op` symbolically and to the neural stack. `composed` replaces the
  // composition of a REDUCE; `leaf` replaces the embedding pushed by a GEN.
  DecoderState<Real> advance(Graph<Real>& g, const DecoderState<Real>& state, const ParserOp& op,
                             std::optional<Var> composed = std::nullopt,
                             std::optional<Var> leaf = std::nullopt) const;

  Var attend(Graph<Real>& g, Var tree_h, Var seq_h, const SourceContext<Real>& src,
             Var* context_out) const;
  StepOutputs<Real> step(Graph<Real>& g, const DecoderState<Real>& state,
                         const SourceContext<Real>& src) const;

  std::vector<Real> op_distribution(const Graph<Real>& g, const StepOutputs<Real>& out) const;
  std::vector<Real> word_distribution(const Graph<Real>& g, const StepOutputs<Real>& out,
                                      const SourceContext<Real>& src) const;
  // Invalid ops are zeroed and the rest renormalized when `mask` is set.
  JointDistribution<Real> joint_distribution(const Graph<Real>& g, const StepOutputs<Real>& out,
                                             const SourceContext<Real>& src,
                                             const ValidOps& valid, bool mask = true) const;

  // Word term of one GEN step: -log P(word).
  Var word_nll(Graph<Real>& g, const StepOutputs<Real>& out, const SourceContext<Real>& src,
               const std::string& word, bool* unknown = nullptr) const;

  // Teacher-forced negative log-likelihood of a gold sequence.
  LossTerms<Real> sequence_loss(Graph<Real>& g, const std::vector<std::string>& source,
                                const TargetSequence& gold, const TeacherInputs<Real>& inputs = {},
                                TeacherStats* stats = nullptr) const;

  // Per-step state values while executing `ops` (state before each op, then
  // the final state).
  std::vector<StepTrace<Real>> trace(const std::vector<std::string>& source,
                                     const TargetSequence& ops) const;

  std::string metadata_json() const;
  // Throws if `metadata_json` describes an incompatible model.
  void check_compatible(const std::string& metadata_json) const;
  static std::unique_ptr<Model> from_metadata(const std::string& metadata_json);

 private:
  ModelConfig config_;
  Vocabulary input_vocab_;
  Vocabulary output_vocab_;
  mutable ParameterStore<Real> params_;

  Parameter<Real>* input_embed_;
  std::vector<LstmCell<Real>> enc_fwd_, enc_bwd_;
  Parameter<Real>* output_embed_;
  Parameter<Real>* root_;
  Parameter<Real>* op_embed_;
  Parameter<Real>* compose_w_;
  Parameter<Real>* compose_b_;
  LstmCell<Real> tree_cell_, seq_cell_, history_cell_;
  Parameter<Real>* seq_h0_;
  Parameter<Real>* seq_c0_;
  Parameter<Real>* history_h0_;
  Parameter<Real>* history_c0_;
  Parameter<Real>* attn_wd_;
  Parameter<Real>* attn_we_;
  Parameter<Real>* attn_v_;
  Parameter<Real>* op_wa_;
  Parameter<Real>* op_ba_;
  Parameter<Real>* op_wo_;
  Parameter<Real>* word_wz_;
  Parameter<Real>* word_bz_;
  Parameter<Real>* word_wc_;
  Parameter<Real>* word_bc_;
  Parameter<Real>* word_ww_;
};

}  // namespace genparse
