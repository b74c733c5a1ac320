#include "genparse/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace genparse {

void BeamConfig::validate() const {
  if (beam_size < 1) throw Error("beam size must be at least 1");
  if (max_words < 1) throw Error("max words must be at least 1");
  if (step_limit() < 2) throw Error("max steps must be at least 2");
}

bool candidate_before(const Candidate& a, int a_word, const Candidate& b, int b_word) {
  if (a.score != b.score) return a.score > b.score;
  if (a.parent != b.parent) return a.parent < b.parent;
  if (a.op.kind != b.op.kind) return int(a.op.kind) < int(b.op.kind);
  return a_word < b_word;
}

template <typename Real>
std::vector<typename Decoder<Real>::Scored> Decoder<Real>::score(
    Graph<Real>& g, const SourceContext<Real>& src, const Hypothesis<Real>& h, int parent,
    const BeamConfig& config, bool reduce_only) const {
  ValidOps valid = valid_ops(h.state.symbolic, static_cast<std::size_t>(config.max_words));
  if (reduce_only && (valid.reduce_l || valid.reduce_r)) valid.gen = false;
  const StepOutputs<Real> out = model_.step(g, h.state, src);
  const JointDistribution<Real> d = model_.joint_distribution(g, out, src, valid, true);

  std::vector<Scored> cands;
  auto push = [&](ParserOp op, Real p, int word_id) {
    if (!(p > 0)) return;
    double s = h.score + std::log(double(p));
    if (config.bias) s += config.bias(h.state.symbolic, op);
    cands.push_back({{parent, std::move(op), s}, word_id});
  };
  push(ParserOp::reduce_l(), d.reduce_l, -1);
  push(ParserOp::reduce_r(), d.reduce_r, -1);
  const Vocabulary& vocab = model_.output_vocab();
  for (int w = 0; w < static_cast<int>(d.gen.size()); ++w) {
    if (w == Vocabulary::kPad || w == Vocabulary::kRoot) continue;
    if (!(d.gen[w] > 0)) continue;
    const std::string& word =
        w < vocab.size() ? vocab.token(w) : src.vocab.oov_words[w - vocab.size()];
    push(ParserOp::gen(word), d.gen[w], w);
  }
  return cands;
}

namespace {

template <typename S>
void sort_candidates(std::vector<S>& c, std::size_t keep) {
  auto before = [](const S& a, const S& b) {
    return candidate_before(a.cand, a.word_id, b.cand, b.word_id);
  };
  keep = std::min(keep, c.size());
  std::partial_sort(c.begin(), c.begin() + keep, c.end(), before);
  c.resize(keep);
}

}  // namespace

template <typename Real>
Hypothesis<Real> Decoder<Real>::apply(Graph<Real>& g, const Hypothesis<Real>& h,
                                      const Candidate& c, std::size_t max_words) const {
  // Masking guarantees validity; re-check against the word cap anyway.
  (void)apply_op(h.state.symbolic, c.op, max_words);
  Hypothesis<Real> next;
  next.state = model_.advance(g, h.state, c.op);
  next.score = c.score;
  next.ops = h.ops;
  next.ops.push_back(c.op);
  next.complete = next.state.symbolic.terminal();
  return next;
}

template <typename Real>
std::vector<Hypothesis<Real>> Decoder<Real>::expand(Graph<Real>& g,
                                                    const SourceContext<Real>& src,
                                                    const Hypothesis<Real>& h, int k,
                                                    const BeamConfig& config) const {
  if (h.complete) throw Error("cannot expand a complete hypothesis");
  auto cands = score(g, src, h, 0, config, false);
  sort_candidates(cands, static_cast<std::size_t>(k));
  std::vector<Hypothesis<Real>> out;
  for (const auto& s : cands) out.push_back(apply(g, h, s.cand, config.max_words));
  return out;
}

template <typename Real>
void Decoder<Real>::force_complete(Graph<Real>& g, const SourceContext<Real>& src,
                                   Hypothesis<Real>& h, const BeamConfig& config) const {
  while (!h.state.symbolic.terminal()) {
    auto cands = score(g, src, h, 0, config, true);
    if (cands.empty()) throw Error("no valid op while completing a hypothesis");
    sort_candidates(cands, 1);
    h = apply(g, h, cands.front().cand, config.max_words);
  }
}

namespace {

double normalized(double score, std::size_t length, double penalty) {
  return penalty == 0 ? score : score / std::pow(double(std::max<std::size_t>(length, 1)), penalty);
}

}  // namespace

template <typename Real>
DecodeResult Decoder<Real>::beam_search(const std::vector<std::string>& source,
                                        const BeamConfig& config) const {
  config.validate();
  Graph<Real> g(false);
  const SourceContext<Real> src = model_.encode(g, source);
  std::vector<Hypothesis<Real>> live{{model_.initial_state(g), 0, {}, false}};
  std::vector<Hypothesis<Real>> done;
  const std::size_t k = static_cast<std::size_t>(config.beam_size);

  for (int step = 0; step < config.step_limit() && !live.empty(); ++step) {
    std::vector<Scored> all;
    for (std::size_t i = 0; i < live.size(); ++i) {
      auto c = score(g, src, live[i], static_cast<int>(i), config, false);
      sort_candidates(c, k);
      all.insert(all.end(), c.begin(), c.end());
    }
    sort_candidates(all, k);
    std::vector<Hypothesis<Real>> next;
    for (const auto& s : all) {
      Hypothesis<Real> h = apply(g, live[s.cand.parent], s.cand, config.max_words);
      (h.complete ? done : next).push_back(std::move(h));
    }
    live = std::move(next);
    if (!done.empty() && !live.empty()) {
      double best_done = -INFINITY;
      for (const auto& h : done) {
        best_done = std::max(best_done, normalized(h.score, h.ops.size(), config.length_penalty));
      }
      bool any_better = false;
      for (const auto& h : live) {
        any_better |= normalized(h.score, h.ops.size(), config.length_penalty) > best_done;
      }
      if (!any_better) break;
    }
  }

  DecodeResult result;
  if (!done.empty()) {
    const Hypothesis<Real>* best = &done.front();
    for (const auto& h : done) {
      if (normalized(h.score, h.ops.size(), config.length_penalty) >
          normalized(best->score, best->ops.size(), config.length_penalty)) {
        best = &h;
      }
    }
    result.ops = best->ops;
    result.score = best->score;
    return result;
  }
  Hypothesis<Real> h = live.front();
  force_complete(g, src, h, config);
  result.ops = h.ops;
  result.score = h.score;
  result.forced = true;
  return result;
}

template <typename Real>
DecodeResult Decoder<Real>::greedy(const std::vector<std::string>& source,
                                   const BeamConfig& config) const {
  config.validate();
  Graph<Real> g(false);
  const SourceContext<Real> src = model_.encode(g, source);
  Hypothesis<Real> h{model_.initial_state(g), 0, {}, false};
  for (int step = 0; step < config.step_limit() && !h.complete; ++step) {
    auto c = score(g, src, h, 0, config, false);
    sort_candidates(c, 1);
    h = apply(g, h, c.front().cand, config.max_words);
  }
  DecodeResult result;
  if (!h.complete) {
    force_complete(g, src, h, config);
    result.forced = true;
  }
  result.ops = h.ops;
  result.score = h.score;
  return result;
}

DecodedOutput decode_output(const TargetSequence& ops) {
  DecodedOutput out;
  out.tree = execute(ops);
  out.summary = extract_summary(ops);
  return out;
}

std::string format_decode_record(const DecodeResult& result) {
  const DecodedOutput d = decode_output(result.ops);
  std::string summary, heads;
  for (std::size_t i = 0; i < d.summary.size(); ++i) {
    if (i) {
      summary += ' ';
      heads += ' ';
    }
    summary += d.summary[i];
    heads += std::to_string(d.tree.heads[i]);
  }
  nlohmann::json j;
  j["summary"] = summary;
  j["ops"] = format_ops(result.ops);
  j["heads"] = heads;
  j["score"] = result.score;
  return j.dump();
}

std::vector<DecodeRecord> load_decode_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open decode output " + path);
  std::vector<DecodeRecord> out;
  std::string line;
  for (long lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    try {
      const auto j = nlohmann::json::parse(line);
      DecodeRecord r;
      r.ops = parse_ops(j.at("ops").get<std::string>());
      const DecodedOutput d = decode_output(r.ops);
      r.summary = d.summary;
      r.heads = d.tree.heads;
      std::istringstream hs(j.at("heads").get<std::string>());
      std::vector<int> heads;
      for (int h; hs >> h;) heads.push_back(h);
      if (heads != r.heads) throw Error("heads disagree with ops");
      r.score = j.at("score").get<double>();
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw Error(where + ": " + e.what());
    }
  }
  return out;
}

template class Decoder<float>;
template class Decoder<double>;

}  // namespace genparse
