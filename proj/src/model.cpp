#include "genparse/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "json.hpp"

namespace genparse {

SourceVocab::SourceVocab(const std::vector<std::string>& source, const Vocabulary& output)
    : tokens(source), output_size(output.size()) {
  std::unordered_map<std::string, int> oov_index;
  extended_ids.reserve(source.size());
  for (const auto& tok : source) {
    if (output.contains(tok)) {
      extended_ids.push_back(output.id(tok));
      continue;
    }
    auto [it, inserted] = oov_index.emplace(tok, static_cast<int>(oov_words.size()));
    if (inserted) oov_words.push_back(tok);
    extended_ids.push_back(output_size + it->second);
  }
}

int SourceVocab::extended_id(const std::string& word, const Vocabulary& output) const {
  if (output.contains(word)) return output.id(word);
  for (std::size_t j = 0; j < oov_words.size(); ++j) {
    if (oov_words[j] == word) return output_size + static_cast<int>(j);
  }
  return -1;
}

std::vector<int> SourceVocab::positions_of(int extended_id) const {
  std::vector<int> pos;
  for (std::size_t i = 0; i < extended_ids.size(); ++i) {
    if (extended_ids[i] == extended_id) pos.push_back(static_cast<int>(i));
  }
  return pos;
}

template <typename Real>
std::vector<Real> mix_word_distribution(Real lambda, std::span<const Real> p_vocab,
                                        std::span<const Real> attention,
                                        const SourceVocab& vocab) {
  if (static_cast<int>(p_vocab.size()) != vocab.output_size ||
      attention.size() != vocab.extended_ids.size()) {
    throw ShapeError("word mixture: " + std::to_string(p_vocab.size()) + " vocabulary and " +
                     std::to_string(attention.size()) + " attention entries for a source of " +
                     std::to_string(vocab.extended_ids.size()));
  }
  std::vector<Real> p(vocab.extended_size(), Real(0));
  for (std::size_t w = 0; w < p_vocab.size(); ++w) p[w] = lambda * p_vocab[w];
  for (std::size_t i = 0; i < attention.size(); ++i) {
    p[vocab.extended_ids[i]] += (Real(1) - lambda) * attention[i];
  }
  return p;
}

template <typename Real>
Real JointDistribution<Real>::prob(OpKind kind, int word) const {
  switch (kind) {
    case OpKind::kReduceL: return reduce_l;
    case OpKind::kReduceR: return reduce_r;
    case OpKind::kGen: return gen.at(word);
  }
  return 0;
}

template <typename Real>
Real JointDistribution<Real>::total() const {
  Real t = reduce_l + reduce_r;
  for (Real p : gen) t += p;
  return t;
}

template <typename Real>
Model<Real>::Model(const ModelConfig& config, Vocabulary input_vocab, Vocabulary output_vocab)
    : config_(config),
      input_vocab_(std::move(input_vocab)),
      output_vocab_(std::move(output_vocab)) {
  const int h = config_.hidden_size;
  const int e = config_.embed();
  if (h <= 0 || e <= 0 || config_.encoder_layers <= 0) {
    throw Error("model sizes must be positive");
  }
  const int enc = 2 * h;  // forward || backward
  const int v = output_vocab_.size();
  auto& p = params_;

  input_embed_ = &p.add("enc.embed", input_vocab_.size(), e);
  for (int l = 0; l < config_.encoder_layers; ++l) {
    const int in = l == 0 ? e : enc;
    enc_fwd_.push_back(LstmCell<Real>::create(p, "enc.l" + std::to_string(l) + ".fwd", in, h));
    enc_bwd_.push_back(LstmCell<Real>::create(p, "enc.l" + std::to_string(l) + ".bwd", in, h));
  }
  output_embed_ = &p.add("dec.embed", v, e);
  root_ = &p.add("dec.root", e, 1);
  op_embed_ = &p.add("dec.op_embed", kNumOpKinds, e);
  compose_w_ = &p.add("compose.W", e, 2 * e);
  compose_b_ = &p.add("compose.b", e, 1, Init::kZero);
  tree_cell_ = LstmCell<Real>::create(p, "tree", e, h);
  seq_cell_ = LstmCell<Real>::create(p, "seq", e, h);
  seq_h0_ = &p.add("seq.h0", h, 1);
  seq_c0_ = &p.add("seq.c0", h, 1);
  history_cell_ = LstmCell<Real>::create(p, "history", e, h);
  history_h0_ = &p.add("history.h0", h, 1);
  history_c0_ = &p.add("history.c0", h, 1);
  attn_wd_ = &p.add("attn.Wd", h, 2 * h);
  attn_we_ = &p.add("attn.We", h, enc);
  attn_v_ = &p.add("attn.w", 1, h);
  op_wa_ = &p.add("op.Wa", h, 2 * h + enc);
  op_ba_ = &p.add("op.ba", h, 1, Init::kZero);
  op_wo_ = &p.add("op.Wo", kNumOpKinds, h);
  word_wz_ = &p.add("word.Wz", 1, 2 * h + enc);
  word_bz_ = &p.add("word.bz", 1, 1, Init::kZero);
  word_wc_ = &p.add("word.Wc", h, 2 * h + enc);
  word_bc_ = &p.add("word.bc", h, 1, Init::kZero);
  word_ww_ = &p.add("word.Ww", v, h);
}

template <typename Real>
SourceContext<Real> Model<Real>::encode(Graph<Real>& g,
                                        const std::vector<std::string>& source) const {
  if (source.empty()) throw Error("cannot encode an empty source");
  if (static_cast<int>(source.size()) > config_.max_source) {
    throw Error("source of " + std::to_string(source.size()) + " tokens exceeds the limit of " +
                std::to_string(config_.max_source));
  }
  const int n = static_cast<int>(source.size());
  const int h = config_.hidden_size;
  std::vector<Var> layer;
  layer.reserve(n);
  for (const auto& tok : source) layer.push_back(g.lookup(*input_embed_, input_vocab_.id(tok)));

  const Var zero = g.constant(Tensor<Real>(h, 1));
  for (int l = 0; l < config_.encoder_layers; ++l) {
    std::vector<Var> fwd(n), bwd(n);
    LstmState<Real> s{zero, zero};
    for (int i = 0; i < n; ++i) {
      s = lstm_step(g, enc_fwd_[l], layer[i], s);
      fwd[i] = s.h;
    }
    s = {zero, zero};
    for (int i = n - 1; i >= 0; --i) {
      s = lstm_step(g, enc_bwd_[l], layer[i], s);
      bwd[i] = s.h;
    }
    for (int i = 0; i < n; ++i) layer[i] = g.concat_rows({fwd[i], bwd[i]});
  }

  SourceContext<Real> ctx;
  ctx.vocab = SourceVocab(source, output_vocab_);
  ctx.states = layer;
  ctx.states_matrix = g.concat_cols(layer);
  ctx.projected = g.matmul(g.param(*attn_we_), ctx.states_matrix);
  return ctx;
}

template <typename Real>
Var Model<Real>::compose(Graph<Real>& g, Var head, Var dependent) const {
  const int e = config_.embed();
  if (g.value(head).rows() != e || g.value(dependent).rows() != e) {
    throw ShapeError("compose: expected two " + std::to_string(e) + "-vectors, got " +
                     g.value(head).shape_string() + " and " + g.value(dependent).shape_string());
  }
  const Var x = g.concat_rows({head, dependent});
  return g.tanh(g.add(g.matmul(g.param(*compose_w_), x), g.param(*compose_b_)));
}

template <typename Real>
Var Model<Real>::word_embedding(Graph<Real>& g, const std::string& word) const {
  return g.lookup(*output_embed_, output_vocab_.id(word));
}

template <typename Real>
Var Model<Real>::root_embedding(Graph<Real>& g) const {
  return g.param(*root_);
}

template <typename Real>
Var Model<Real>::tree_state_from_scratch(Graph<Real>& g, const std::vector<Var>& reps) const {
  const Var zero = g.constant(Tensor<Real>(config_.hidden_size, 1));
  LstmState<Real> s{zero, zero};
  for (Var r : reps) s = lstm_step(g, tree_cell_, r, s);
  return s.h;
}

template <typename Real>
Var Model<Real>::seq_state_from_scratch(Graph<Real>& g,
                                        const std::vector<std::string>& words) const {
  LstmState<Real> s{g.param(*seq_h0_), g.param(*seq_c0_)};
  for (const auto& w : words) s = lstm_step(g, seq_cell_, word_embedding(g, w), s);
  return s.h;
}

template <typename Real>
Var Model<Real>::history_state_from_scratch(Graph<Real>& g,
                                            const std::vector<OpKind>& ops) const {
  LstmState<Real> s{g.param(*history_h0_), g.param(*history_c0_)};
  for (OpKind k : ops) s = lstm_step(g, history_cell_, g.lookup(*op_embed_, int(k)), s);
  return s.h;
}

template <typename Real>
DecoderState<Real> Model<Real>::initial_state(Graph<Real>& g) const {
  DecoderState<Real> st;
  const Var zero = g.constant(Tensor<Real>(config_.hidden_size, 1));
  const Var root = root_embedding(g);
  st.stack.push_back({root, lstm_step(g, tree_cell_, root, LstmState<Real>{zero, zero})});
  st.seq = {g.param(*seq_h0_), g.param(*seq_c0_)};
  st.history = {g.param(*history_h0_), g.param(*history_c0_)};
  return st;
}

template <typename Real>
DecoderState<Real> Model<Real>::advance(Graph<Real>& g, const DecoderState<Real>& state,
                                        const ParserOp& op, std::optional<Var> composed,
                                        std::optional<Var> leaf) const {
  DecoderState<Real> next;
  next.symbolic = apply_op(state.symbolic, op);
  next.stack = state.stack;
  next.seq = state.seq;
  next.words_consumed = state.words_consumed;

  Var pushed;
  switch (op.kind) {
    case OpKind::kGen: {
      pushed = leaf ? *leaf : word_embedding(g, op.word);
      next.seq = lstm_step(g, seq_cell_, pushed, state.seq);
      ++next.words_consumed;
      break;
    }
    case OpKind::kReduceL:
    case OpKind::kReduceR: {
      const Var top = next.stack.back().rep;
      next.stack.pop_back();
      if (next.stack.size() == 1) {
        // Attaching to the root ends the derivation; nothing reads a
        // representation of the finished tree.
        next.history =
            lstm_step(g, history_cell_, g.lookup(*op_embed_, int(op.kind)), state.history);
        return next;
      }
      const Var second = next.stack.back().rep;
      next.stack.pop_back();
      if (composed) {
        pushed = *composed;
      } else if (op.kind == OpKind::kReduceL) {
        pushed = compose(g, top, second);
      } else {
        pushed = compose(g, second, top);
      }
      break;
    }
  }
  LstmState<Real> below;
  if (next.stack.empty()) {
    const Var zero = g.constant(Tensor<Real>(config_.hidden_size, 1));
    below = {zero, zero};
  } else {
    below = next.stack.back().tree;
  }
  next.stack.push_back({pushed, lstm_step(g, tree_cell_, pushed, below)});
  next.history = lstm_step(g, history_cell_, g.lookup(*op_embed_, int(op.kind)), state.history);
  return next;
}

template <typename Real>
Var Model<Real>::attend(Graph<Real>& g, Var tree_h, Var seq_h, const SourceContext<Real>& src,
                        Var* context_out) const {
  const int n = static_cast<int>(src.states.size());
  const Var query = g.matmul(g.param(*attn_wd_), g.concat_rows({tree_h, seq_h}));
  const Var hidden = g.tanh(g.add(src.projected, query));
  const Var scores = g.reshape(g.matmul(g.param(*attn_v_), hidden), n, 1);
  const Var alpha = g.softmax(scores);
  if (context_out) *context_out = g.matmul(src.states_matrix, alpha);
  return alpha;
}

template <typename Real>
StepOutputs<Real> Model<Real>::step(Graph<Real>& g, const DecoderState<Real>& state,
                                    const SourceContext<Real>& src) const {
  StepOutputs<Real> out;
  const Var tree_h = state.tree_h();
  const Var seq_h = state.seq.h;
  out.attention = attend(g, tree_h, seq_h, src, &out.context);

  const Var op_in = g.concat_rows({tree_h, state.history.h, out.context});
  const Var op_hidden = g.tanh(g.add(g.matmul(g.param(*op_wa_), op_in), g.param(*op_ba_)));
  out.op_log_probs = g.log_softmax(g.matmul(g.param(*op_wo_), op_hidden));

  const Var word_in = g.concat_rows({seq_h, tree_h, out.context});
  out.switch_prob =
      g.sigmoid(g.add(g.matmul(g.param(*word_wz_), word_in), g.param(*word_bz_)));
  const Var word_hidden =
      g.tanh(g.add(g.matmul(g.param(*word_wc_), word_in), g.param(*word_bc_)));
  out.vocab_probs = g.softmax(g.matmul(g.param(*word_ww_), word_hidden));
  return out;
}

template <typename Real>
std::vector<Real> Model<Real>::op_distribution(const Graph<Real>& g,
                                               const StepOutputs<Real>& out) const {
  std::vector<Real> p;
  for (Real lp : g.value(out.op_log_probs).values()) p.push_back(std::exp(lp));
  return p;
}

template <typename Real>
std::vector<Real> Model<Real>::word_distribution(const Graph<Real>& g,
                                                 const StepOutputs<Real>& out,
                                                 const SourceContext<Real>& src) const {
  return mix_word_distribution<Real>(g.scalar_value(out.switch_prob),
                                     g.value(out.vocab_probs).values(),
                                     g.value(out.attention).values(), src.vocab);
}

template <typename Real>
JointDistribution<Real> Model<Real>::joint_distribution(const Graph<Real>& g,
                                                        const StepOutputs<Real>& out,
                                                        const SourceContext<Real>& src,
                                                        const ValidOps& valid,
                                                        bool mask) const {
  if (valid.complete) throw Error("joint distribution requested for a terminal state");
  const std::vector<Real> ops = op_distribution(g, out);
  JointDistribution<Real> d;
  d.reduce_l = ops[int(OpKind::kReduceL)];
  d.reduce_r = ops[int(OpKind::kReduceR)];
  d.gen = word_distribution(g, out, src);
  const Real p_gen = ops[int(OpKind::kGen)];
  for (Real& p : d.gen) p *= p_gen;
  if (!mask) return d;

  if (!valid.reduce_l) d.reduce_l = 0;
  if (!valid.reduce_r) d.reduce_r = 0;
  if (!valid.gen) std::fill(d.gen.begin(), d.gen.end(), Real(0));
  const Real z = d.total();
  if (!(z > 0)) throw Error("every op is masked in a non-terminal state");
  d.reduce_l /= z;
  d.reduce_r /= z;
  for (Real& p : d.gen) p /= z;
  return d;
}

template <typename Real>
Var Model<Real>::word_nll(Graph<Real>& g, const StepOutputs<Real>& out,
                          const SourceContext<Real>& src, const std::string& word,
                          bool* unknown) const {
  const int ext = src.vocab.extended_id(word, output_vocab_);
  if (unknown) *unknown = ext < 0;
  const Var lambda = out.switch_prob;
  Var prob;
  if (ext < 0) {
    prob = g.scale(lambda, g.pick(out.vocab_probs, Vocabulary::kUnk));
  } else {
    const std::vector<int> positions = src.vocab.positions_of(ext);
    Var copy;
    if (!positions.empty()) copy = g.scale(g.one_minus(lambda), g.gather_sum(out.attention, positions));
    if (ext < src.vocab.output_size) {
      const Var gen = g.scale(lambda, g.pick(out.vocab_probs, ext));
      prob = copy.valid() ? g.add(gen, copy) : gen;
    } else {
      prob = copy;
    }
  }
  return g.scale(g.scalar(Real(-1)), g.log(prob));
}

namespace {

template <typename Real>
int argmax(std::span<const Real> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

template <typename Real>
LossTerms<Real> Model<Real>::sequence_loss(Graph<Real>& g, const std::vector<std::string>& source,
                                           const TargetSequence& gold,
                                           const TeacherInputs<Real>& inputs,
                                           TeacherStats* stats) const {
  if (gold.empty()) throw Error("empty gold sequence");
  const SourceContext<Real> src = encode(g, source);
  DecoderState<Real> state = initial_state(g);
  if (inputs.leaves) state.stack.front().rep = (*inputs.leaves)[0];
  if (inputs.leaves) {
    const Var zero = g.constant(Tensor<Real>(config_.hidden_size, 1));
    state.stack.front().tree =
        lstm_step(g, tree_cell_, (*inputs.leaves)[0], LstmState<Real>{zero, zero});
  }

  std::vector<Var> op_terms, word_terms;
  std::size_t reduce_index = 0;
  int word_index = 0;
  for (const ParserOp& op : gold) {
    if (state.symbolic.terminal()) throw Error("gold sequence continues past termination");
    const StepOutputs<Real> out = step(g, state, src);
    op_terms.push_back(g.pick(out.op_log_probs, int(op.kind)));
    if (stats) {
      ++stats->op_total;
      stats->op_correct += argmax<Real>(g.value(out.op_log_probs).values()) == int(op.kind);
    }
    std::optional<Var> composed, leaf;
    if (op.is_gen()) {
      bool unknown = false;
      word_terms.push_back(word_nll(g, out, src, op.word, &unknown));
      ++word_index;
      if (inputs.leaves) leaf = (*inputs.leaves)[word_index];
      if (stats) {
        ++stats->word_total;
        stats->unknown_words += unknown;
        const std::vector<Real> p = word_distribution(g, out, src);
        const int ext = src.vocab.extended_id(op.word, output_vocab_);
        const int want = ext < 0 ? Vocabulary::kUnk : ext;
        stats->word_correct += argmax<Real>(p) == want;
      }
    } else if (inputs.compositions && state.stack.size() > 2) {
      composed = (*inputs.compositions).at(reduce_index++);
    }
    state = advance(g, state, op, composed, leaf);
  }
  if (!state.symbolic.terminal()) throw Error("gold sequence does not terminate");

  LossTerms<Real> terms;
  const Var minus = g.scalar(Real(-1));
  terms.op = g.scale(minus, g.sum(g.concat_rows(op_terms)));
  terms.word = g.sum(g.concat_rows(word_terms));
  terms.total = g.add(terms.op, terms.word);
  return terms;
}

template <typename Real>
std::vector<StepTrace<Real>> Model<Real>::trace(const std::vector<std::string>& source,
                                                const TargetSequence& ops) const {
  Graph<Real> g(false);
  const SourceContext<Real> src = encode(g, source);
  DecoderState<Real> state = initial_state(g);
  std::vector<StepTrace<Real>> out;
  auto record = [&] {
    StepTrace<Real> t;
    auto copy = [&](Var v) {
      auto vals = g.value(v).values();
      return std::vector<Real>(vals.begin(), vals.end());
    };
    t.tree_h = copy(state.tree_h());
    t.seq_h = copy(state.seq.h);
    t.history_h = copy(state.history.h);
    t.stack_depth = state.stack.size();
    t.words_consumed = state.words_consumed;
    out.push_back(std::move(t));
  };
  record();
  for (const ParserOp& op : ops) {
    state = advance(g, state, op);
    record();
  }
  (void)src;
  return out;
}

template <typename Real>
std::string Model<Real>::metadata_json() const {
  nlohmann::json j;
  j["format"] = "genparse-model";
  j["hidden_size"] = config_.hidden_size;
  j["embed_size"] = config_.embed();
  j["encoder_layers"] = config_.encoder_layers;
  j["max_source"] = config_.max_source;
  auto strip = [](const Vocabulary& v) {
    return std::vector<std::string>(v.tokens().begin() + Vocabulary::kNumSpecials,
                                    v.tokens().end());
  };
  char buf[32];
  j["input_vocab"] = strip(input_vocab_);
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(input_vocab_.hash()));
  j["input_vocab_hash"] = buf;
  j["output_vocab"] = strip(output_vocab_);
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(output_vocab_.hash()));
  j["output_vocab_hash"] = buf;
  return j.dump();
}

namespace {

struct ParsedMetadata {
  ModelConfig config;
  Vocabulary input, output;
};

ParsedMetadata parse_metadata(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("unreadable model metadata: ") + e.what());
  }
  if (j.value("format", "") != "genparse-model") throw Error("not a genparse model checkpoint");
  ParsedMetadata m;
  try {
    m.config.hidden_size = j.at("hidden_size").get<int>();
    m.config.embed_size = j.at("embed_size").get<int>();
    m.config.encoder_layers = j.at("encoder_layers").get<int>();
    m.config.max_source = j.at("max_source").get<int>();
    m.input = Vocabulary(j.at("input_vocab").get<std::vector<std::string>>());
    m.output = Vocabulary(j.at("output_vocab").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("incomplete model metadata: ") + e.what());
  }
  auto check_hash = [&](const char* key, const Vocabulary& v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v.hash()));
    if (j.value(key, "") != buf) throw Error(std::string("vocabulary hash mismatch for ") + key);
  };
  check_hash("input_vocab_hash", m.input);
  check_hash("output_vocab_hash", m.output);
  return m;
}

}  // namespace

template <typename Real>
void Model<Real>::check_compatible(const std::string& metadata_json) const {
  const ParsedMetadata m = parse_metadata(metadata_json);
  if (m.config.hidden_size != config_.hidden_size || m.config.embed() != config_.embed() ||
      m.config.encoder_layers != config_.encoder_layers) {
    throw Error("checkpoint model sizes differ from the configured model");
  }
  if (m.input.hash() != input_vocab_.hash() || m.output.hash() != output_vocab_.hash()) {
    throw Error("checkpoint vocabularies differ from the configured model");
  }
}

template <typename Real>
std::unique_ptr<Model<Real>> Model<Real>::from_metadata(const std::string& metadata_json) {
  ParsedMetadata m = parse_metadata(metadata_json);
  return std::make_unique<Model<Real>>(m.config, std::move(m.input), std::move(m.output));
}

template std::vector<float> mix_word_distribution(float, std::span<const float>,
                                                  std::span<const float>, const SourceVocab&);
template std::vector<double> mix_word_distribution(double, std::span<const double>,
                                                   std::span<const double>, const SourceVocab&);
template struct JointDistribution<float>;
template struct JointDistribution<double>;
template class Model<float>;
template class Model<double>;

}  // namespace genparse
