#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "genparse/transition.hpp"

namespace genparse {

struct Prf {
  double precision = 0;
  double recall = 0;
  double f = 0;
};

Prf make_prf(double matched, double predicted, double target);

// Clipped n-gram overlap.
Prf rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
            int n);
// Longest common subsequence, F with beta = 1.
Prf rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);

// Directed, unlabeled head -> dependent word pair.
struct Relation {
  std::string head;
  std::string dependent;
  bool operator==(const Relation&) const = default;
};

// Arcs between words; attachments to the root node carry no head word and are
// skipped.
std::vector<Relation> relations_from_tree(const DependencyTree& tree);

class EmbeddingTable {
 public:
  // Keeps the first vector given for a word.
  void add(const std::string& word, std::vector<double> vec);
  bool contains(const std::string& word) const { return index_.count(word) > 0; }
  std::size_t size() const { return vectors_.size(); }
  int dimension() const { return dim_; }
  // Cosine similarity; nullopt unless both words are in the table.
  std::optional<double> cosine(const std::string& a, const std::string& b) const;

 private:
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<double>> vectors_;
  int dim_ = 0;
};

// `word v1 ... vd` per line.
EmbeddingTable parse_embeddings(std::istream& in, const std::string& origin = "<stream>");
EmbeddingTable load_embeddings(const std::filesystem::path& path);

// Word similarity used for relation matching: 1 for equal strings; otherwise
// the cosine, held strictly below 1, when both words are in the table and
// sigma < 1; otherwise 0. `missing` counts lookups that fell back to string
// equality.
double word_similarity(const std::string& a, const std::string& b, const EmbeddingTable* table,
                       double sigma, long* missing = nullptr);

struct RelationMatch {
  Prf prf;
  long matched = 0;
  long missing_words = 0;
};

// One-to-one matching: pairs whose head and dependent similarities both reach
// sigma are taken greedily by descending min-similarity, ties by first
// occurrence (predicted index, then target index).
RelationMatch relation_f(const std::vector<Relation>& predicted,
                         const std::vector<Relation>& target, const EmbeddingTable* table,
                         double sigma);

}  // namespace genparse
