#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "doctest.h"
#include "genparse/grad_check.hpp"
#include "genparse/model.hpp"
#include "test_util.hpp"

using namespace genparse;

namespace {

const std::vector<std::string> kSource = tokenize(
    "a convicted man escaped from a prison in texas on sunday , police said");

template <typename Real>
std::vector<Real> values(const Graph<Real>& g, Var v) {
  auto s = g.value(v).values();
  return {s.begin(), s.end()};
}

template <typename Real>
double sum(const std::vector<Real>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0);
}

template <typename Real>
double max_abs_diff(const std::vector<Real>& a, const std::vector<Real>& b) {
  REQUIRE(a.size() == b.size());
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(double(a[i]) - b[i]));
  return d;
}

}  // namespace

TEST_CASE("source vocabulary extends the output vocabulary with source OOVs") {
  const Vocabulary out(std::vector<std::string>{"man", "escaped"});
  const SourceVocab sv({"the", "man", "the", "fled"}, out);
  CHECK(sv.output_size == out.size());
  CHECK(sv.oov_words == std::vector<std::string>{"the", "fled"});
  CHECK(sv.extended_ids == std::vector<int>{out.size(), out.id("man"), out.size(), out.size() + 1});
  CHECK(sv.extended_id("fled", out) == out.size() + 1);
  CHECK(sv.extended_id("escaped", out) == out.id("escaped"));
  CHECK(sv.extended_id("nowhere", out) == -1);
  CHECK(sv.positions_of(out.size()) == std::vector<int>{0, 2});
}

TEST_CASE("copy mixture arithmetic") {
  const Vocabulary out(std::vector<std::string>{"w"});  // id 3
  const SourceVocab sv({"x", "w", "y", "w"}, out);
  const std::vector<double> p_vocab{0.3, 0.3, 0.3, 0.1};
  const std::vector<double> alpha{0.25, 0.3, 0.25, 0.2};
  const auto p = mix_word_distribution<double>(0.5, p_vocab, alpha, sv);
  CHECK(p[out.id("w")] == doctest::Approx(0.30).epsilon(1e-12));
  CHECK(sum(p) == doctest::Approx(1.0).epsilon(1e-12));

  const auto q = mix_word_distribution<double>(1.0, p_vocab, alpha, sv);
  for (std::size_t i = 0; i < p_vocab.size(); ++i) CHECK(q[i] == p_vocab[i]);
  for (std::size_t i = p_vocab.size(); i < q.size(); ++i) CHECK(q[i] == 0);
}

TEST_CASE("zero parameters give zero states and uniform distributions") {
  auto m = testutil::toy_model<double>(6);
  m->params().fill_values(0);
  Graph<double> g(false);
  const auto src = m->encode(g, kSource);
  REQUIRE(src.states.size() == kSource.size());
  for (Var s : src.states) {
    for (double v : values(g, s)) CHECK(v == 0);
  }
  const Var c = m->compose(g, m->root_embedding(g), m->root_embedding(g));
  for (double v : values(g, c)) CHECK(v == 0);

  const auto state = m->initial_state(g);
  const auto out = m->step(g, state, src);
  for (double p : m->op_distribution(g, out)) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(g.scalar_value(out.switch_prob) == 0.5);
  for (double a : values(g, out.attention)) {
    CHECK(a == doctest::Approx(1.0 / kSource.size()).epsilon(1e-12));
  }
}

TEST_CASE("encoder shape, errors and order sensitivity") {
  auto m = testutil::toy_model<double>(5, 3);
  Graph<double> g(false);
  CHECK(m->encode(g, {"man"}).states.size() == 1);
  CHECK_THROWS_AS(m->encode(g, {}), Error);
  CHECK_THROWS_AS(m->encode(g, std::vector<std::string>(101, "a")), Error);

  std::vector<std::string> rev(kSource.rbegin(), kSource.rend());
  const auto fwd = m->encode(g, kSource);
  const auto bwd = m->encode(g, rev);
  CHECK(max_abs_diff(values(g, fwd.states[0]), values(g, bwd.states.back())) > 1e-6);

  // Unknown tokens encode like <unk>.
  const auto u1 = m->encode(g, {"zzzz"});
  const auto u2 = m->encode(g, {"<unk>"});
  CHECK(values(g, u1.states[0]) == values(g, u2.states[0]));
}

TEST_CASE("attention properties") {
  auto m = testutil::toy_model<double>(6, 4);
  Graph<double> g(false);
  const auto state = m->initial_state(g);
  const auto one = m->encode(g, {"police"});
  CHECK(values(g, m->step(g, state, one).attention) == std::vector<double>{1.0});

  // Identical tokens in a one-layer unidirectional view are not identical
  // states, so build identical columns directly.
  SourceContext<double> same = one;
  same.states = {one.states[0], one.states[0], one.states[0]};
  same.states_matrix = g.concat_cols(same.states);
  same.projected = g.concat_cols(std::vector<Var>{one.projected, one.projected, one.projected});
  same.vocab = SourceVocab({"police", "police", "police"}, m->output_vocab());
  Var ctx;
  const auto alpha = values(g, m->attend(g, state.tree_h(), state.seq.h, same, &ctx));
  for (double a : alpha) CHECK(a == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(max_abs_diff(values(g, ctx), values(g, one.states[0])) < 1e-12);
}

TEST_CASE("compose output range and dimension errors") {
  auto m = testutil::toy_model<double>(6, 8);
  for (std::size_t i = 0; i < m->params().size(); ++i) {
    for (double& v : m->params()[i].value.values()) v *= 3;
  }
  Graph<double> g(false);
  const Var c = m->compose(g, m->word_embedding(g, "man"), m->word_embedding(g, "prison"));
  for (double v : values(g, c)) {
    CHECK(v > -1);
    CHECK(v < 1);
  }
  CHECK_THROWS_AS(m->compose(g, g.constant(Tensor<double>(3, 1)), c), ShapeError);
}

TEST_CASE("distributions sum to one and masking removes invalid mass") {
  auto m = testutil::toy_model<double>(6, 5);
  Graph<double> g(false);
  const auto src = m->encode(g, kSource);
  auto state = m->initial_state(g);
  auto out = m->step(g, state, src);
  CHECK(sum(m->op_distribution(g, out)) == doctest::Approx(1).epsilon(1e-12));
  CHECK(sum(m->word_distribution(g, out, src)) == doctest::Approx(1).epsilon(1e-12));

  const auto masked = m->joint_distribution(g, out, src, valid_ops(state.symbolic));
  CHECK(masked.reduce_l == 0);
  CHECK(masked.reduce_r == 0);
  CHECK(masked.total() == doctest::Approx(1).epsilon(1e-12));

  const auto raw = m->joint_distribution(g, out, src, valid_ops(state.symbolic), false);
  CHECK(sum(raw.gen) == doctest::Approx(m->op_distribution(g, out)[int(OpKind::kGen)]).epsilon(1e-12));
  CHECK(raw.total() == doctest::Approx(1).epsilon(1e-12));

  state = m->advance(g, state, ParserOp::gen("man"));
  state = m->advance(g, state, ParserOp::reduce_r());
  CHECK_THROWS_AS(m->joint_distribution(g, m->step(g, state, src), src,
                                        valid_ops(state.symbolic)),
                  Error);
}

TEST_CASE("state indexing along the worked example") {
  auto m = testutil::toy_model<float>(8, 6);
  const auto ops = parse_ops(testutil::prison_ops());
  const auto trace = m->trace(kSource, ops);
  REQUIRE(trace.size() == ops.size() + 1);

  // Before the seventh op the stack holds the root and two partial trees.
  CHECK(trace[6].stack_depth == 3);
  // Before the eighth op five words have been generated.
  CHECK(trace[7].words_consumed == 5);
  CHECK(trace[6].words_consumed == 4);

  // No word is generated by the eighth op, so the ninth step sees the same h^y.
  CHECK(trace[8].seq_h == trace[7].seq_h);

  Graph<float> g(false);
  auto state = m->initial_state(g);
  for (int i = 0; i < 6; ++i) state = m->advance(g, state, ops[i]);
  std::vector<Var> reps;
  for (const auto& e : state.stack) reps.push_back(e.rep);
  CHECK(reps.size() == 3);
  CHECK(max_abs_diff(values(g, state.tree_h()), values(g, m->tree_state_from_scratch(g, reps))) <
        1e-6);
  state = m->advance(g, state, ops[6]);
  CHECK(max_abs_diff(values(g, state.seq.h),
                     values(g, m->seq_state_from_scratch(
                                   g, {"a", "man", "escaped", "from", "prison"}))) < 1e-6);

  // History before the sixth op covers GEN GEN RL GEN RL.
  Graph<float> h(false);
  auto st = m->initial_state(h);
  for (int i = 0; i < 5; ++i) st = m->advance(h, st, ops[i]);
  const std::vector<OpKind> kinds{OpKind::kGen, OpKind::kGen, OpKind::kReduceL, OpKind::kGen,
                                  OpKind::kReduceL};
  CHECK(max_abs_diff(values(h, st.history.h), values(h, m->history_state_from_scratch(h, kinds))) <
        1e-6);
  auto other = kinds;
  other[2] = OpKind::kReduceR;
  CHECK(max_abs_diff(values(h, m->history_state_from_scratch(h, kinds)),
                     values(h, m->history_state_from_scratch(h, other))) > 1e-6);
  // Empty prefixes give the learned initial states.
  CHECK(values(h, m->history_state_from_scratch(h, {})) == values(h, m->initial_state(h).history.h));
  CHECK(values(h, m->seq_state_from_scratch(h, {})) == values(h, m->initial_state(h).seq.h));
}

TEST_CASE("root-only stack unrolls the tree LSTM once") {
  auto m = testutil::toy_model<double>(5, 2);
  Graph<double> g(false);
  const auto st = m->initial_state(g);
  CHECK(st.stack.size() == 1);
  CHECK(values(g, st.tree_h()) ==
        values(g, m->tree_state_from_scratch(g, {m->root_embedding(g)})));
}

TEST_CASE("stack LSTM matches from-scratch unrolls over random ops") {
  auto m = testutil::toy_model<float>(8, 7);
  std::mt19937_64 rng(21);
  const std::vector<std::string> lexicon{"man", "escaped", "prison", "zzz"};
  const auto ops = testutil::random_valid_ops(rng, lexicon, 200, false);
  Graph<float> g(false);
  auto state = m->initial_state(g);
  double worst = 0;
  for (const auto& op : ops) {
    state = m->advance(g, state, op);
    REQUIRE(state.stack.size() == state.symbolic.depth());
    std::vector<Var> reps;
    for (const auto& e : state.stack) reps.push_back(e.rep);
    worst = std::max(worst, max_abs_diff(values(g, state.tree_h()),
                                         values(g, m->tree_state_from_scratch(g, reps))));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("zero parameters give the uniform op loss") {
  auto m = testutil::toy_model<double>(4);
  m->params().fill_values(0);
  const auto ops = parse_ops(testutil::prison_ops());
  Graph<double> g;
  const auto terms = m->sequence_loss(g, kSource, ops);
  CHECK(g.scalar_value(terms.op) == doctest::Approx(10 * std::log(3.0)).epsilon(1e-12));
  CHECK(g.scalar_value(terms.word) > 0);
  CHECK(g.scalar_value(terms.total) ==
        doctest::Approx(g.scalar_value(terms.op) + g.scalar_value(terms.word)).epsilon(1e-12));
}

TEST_CASE("word term of a word outside vocabulary and source uses <unk>") {
  auto m = testutil::toy_model<double>(4, 3);
  Graph<double> g(false);
  const auto src = m->encode(g, kSource);
  const auto out = m->step(g, m->initial_state(g), src);
  bool unknown = false;
  const double nll = g.scalar_value(m->word_nll(g, out, src, "qwertyuiop", &unknown));
  CHECK(unknown);
  const double lambda = g.scalar_value(out.switch_prob);
  const double p_unk = g.value(out.vocab_probs)[Vocabulary::kUnk];
  CHECK(nll == doctest::Approx(-std::log(lambda * p_unk)).epsilon(1e-12));

  // A source-only word is scored through the copy term alone.
  const double copy = g.scalar_value(m->word_nll(g, out, src, "convicted", &unknown));
  CHECK_FALSE(unknown);
  const auto p = m->word_distribution(g, out, src);
  CHECK(copy == doctest::Approx(-std::log(p[src.vocab.extended_id("convicted", m->output_vocab())]))
                    .epsilon(1e-12));
}

TEST_CASE("teacher forcing rejects sequences that do not terminate") {
  auto m = testutil::toy_model<double>(4);
  Graph<double> g;
  CHECK_THROWS_AS(m->sequence_loss(g, kSource, parse_ops("GEN(man) GEN(escaped) RL")), Error);
  CHECK_THROWS_AS(m->sequence_loss(g, kSource, parse_ops("GEN(man) RR GEN(x)")), Error);
}

TEST_CASE("loss gradient matches finite differences") {
  auto m = testutil::toy_model<double>(3, 12, 1);
  const auto ops = parse_ops("GEN(man) GEN(escaped) RL GEN(prison) RR RR");
  const auto r = grad_check(
      m->params(), [&](Graph<double>& g) { return m->sequence_loss(g, kSource, ops).total; }, 1e-3,
      6);
  INFO("worst coordinate " << r.worst);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("loss is deterministic") {
  auto m = testutil::toy_model<float>(16, 5);
  const auto ops = parse_ops(testutil::prison_ops());
  auto run = [&] {
    Graph<float> g;
    return g.scalar_value(m->sequence_loss(g, kSource, ops).total);
  };
  const float a = run();
  const float b = run();
  CHECK(std::memcmp(&a, &b, sizeof a) == 0);
}

TEST_CASE("metadata round trip and compatibility checks") {
  auto m = testutil::toy_model<float>(8);
  const std::string meta = m->metadata_json();
  auto copy = Model<float>::from_metadata(meta);
  CHECK(copy->config().hidden_size == 8);
  CHECK(copy->input_vocab().hash() == m->input_vocab().hash());
  CHECK(copy->output_vocab().tokens() == m->output_vocab().tokens());
  CHECK(copy->params().num_values() == m->params().num_values());
  CHECK_NOTHROW(m->check_compatible(meta));

  auto other = testutil::toy_model<float>(10);
  CHECK_THROWS_AS(other->check_compatible(meta), Error);
  CHECK_THROWS_AS(Model<float>::from_metadata("{}"), Error);
  CHECK_THROWS_AS(Model<float>::from_metadata("not json"), Error);
}
