#pragma once

#include <functional>
#include <string>
#include <vector>

#include "genparse/model.hpp"

namespace genparse {

struct BeamConfig {
  int beam_size = 10;
  int max_words = 60;
  int max_steps = 0;           // 0: 2 * max_words
  double length_penalty = 0;   // completed scores divided by (ops)^length_penalty
  // Optional additive score adjustment per candidate op; unset by default.
  std::function<double(const StackState&, const ParserOp&)> bias;

  int step_limit() const { return max_steps > 0 ? max_steps : 2 * max_words; }
  void validate() const;
};

template <typename Real>
struct Hypothesis {
  DecoderState<Real> state;
  double score = 0;  // summed log-probability
  TargetSequence ops;
  bool complete = false;
};

// A scored continuation of one hypothesis.
struct Candidate {
  int parent = 0;
  ParserOp op;
  double score = 0;
};

// Candidate order: higher score first, then parent index, then
// REDUCE_L < REDUCE_R < GEN by extended word id.
bool candidate_before(const Candidate& a, int a_word, const Candidate& b, int b_word);

struct DecodeResult {
  TargetSequence ops;
  double score = 0;
  bool forced = false;  // completed by the fallback
};

template <typename Real>
class Decoder {
 public:
  explicit Decoder(const Model<Real>& model) : model_(model) {}

  // The top `k` valid continuations of `h`, advanced.
  std::vector<Hypothesis<Real>> expand(Graph<Real>& g, const SourceContext<Real>& src,
                                       const Hypothesis<Real>& h, int k,
                                       const BeamConfig& config) const;

  DecodeResult beam_search(const std::vector<std::string>& source, const BeamConfig& config) const;
  // Argmax op at every step.
  DecodeResult greedy(const std::vector<std::string>& source, const BeamConfig& config) const;

 private:
  struct Scored {
    Candidate cand;
    int word_id = -1;  // extended id for GEN
  };
  std::vector<Scored> score(Graph<Real>& g, const SourceContext<Real>& src,
                            const Hypothesis<Real>& h, int parent, const BeamConfig& config,
                            bool reduce_only) const;
  Hypothesis<Real> apply(Graph<Real>& g, const Hypothesis<Real>& h, const Candidate& c,
                         std::size_t max_words) const;
  void force_complete(Graph<Real>& g, const SourceContext<Real>& src, Hypothesis<Real>& h,
                      const BeamConfig& config) const;

  const Model<Real>& model_;
};

struct DecodedOutput {
  std::vector<std::string> summary;
  DependencyTree tree;
};

// Throws on an incomplete sequence.
DecodedOutput decode_output(const TargetSequence& ops);

// One JSON line: summary, ops, heads (space separated), score.
std::string format_decode_record(const DecodeResult& result);

struct DecodeRecord {
  std::vector<std::string> summary;
  TargetSequence ops;
  std::vector<int> heads;
  double score = 0;
};
std::vector<DecodeRecord> load_decode_records(const std::string& path);

}  // namespace genparse
