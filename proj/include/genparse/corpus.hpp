#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "genparse/transition.hpp"

namespace genparse {

class CorpusError : public Error {
 public:
  using Error::Error;
};

struct Example {
  std::vector<std::string> source;
  std::vector<std::string> summary;
  std::vector<int> heads;  // 0 = root
  // Optional parse of the source, used for source-side relation scoring.
  std::vector<int> source_heads;

  DependencyTree summary_tree() const { return {summary, heads}; }
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kRoot = 2;
  static constexpr int kNumSpecials = 3;

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& tokens);  // specials first

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(const std::string& token) const;  // kUnk if absent
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }
  const std::string& token(int id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::uint64_t hash() const;

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

enum class VocabRole { kInput, kOutput };

struct VocabConfig {
  int input_min_count = 5;
  int output_max_size = 10000;
};

// Input vocabulary: source tokens seen at least input_min_count times.
// Output vocabulary: the output_max_size most frequent summary tokens.
// Frequency ties are broken lexicographically.
Vocabulary build_vocab(const std::vector<Example>& corpus, VocabRole role,
                       const VocabConfig& config = {});

// Lowercases and splits on whitespace.
std::vector<std::string> tokenize(const std::string& text);

// Newline-delimited JSON records with "source", "summary" and "heads"
// (optional "source_heads").
std::vector<Example> load_corpus(const std::filesystem::path& path);
std::vector<Example> parse_corpus(std::istream& in, const std::string& origin = "<stream>");
void write_corpus(std::ostream& out, const std::vector<Example>& corpus);

TargetSequence linearize(const Example& ex);

struct FilterConfig {
  std::size_t max_source = 100;
  std::size_t max_summary = 60;
};

struct FilterStats {
  std::map<std::string, std::size_t> rejected;  // reason -> count
  std::size_t retained = 0;
  std::size_t total_rejected() const;
};

std::vector<Example> filter(const std::vector<Example>& examples, FilterStats& stats,
                            const FilterConfig& config = {});

// Tab-separated CoNLL-style blocks (ID FORM ... HEAD ..., or just FORM HEAD)
// separated by blank lines; `sources` holds one source text per block.
std::vector<DependencyTree> read_conll(std::istream& in);
std::vector<Example> convert_conll(std::istream& conll, std::istream& sources);

}  // namespace genparse
