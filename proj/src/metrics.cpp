#include "genparse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace genparse {

Prf make_prf(double matched, double predicted, double target) {
  Prf r;
  r.precision = predicted > 0 ? matched / predicted : 0;
  r.recall = target > 0 ? matched / target : 0;
  const double s = r.precision + r.recall;
  r.f = s > 0 ? 2 * r.precision * r.recall / s : 0;
  return r;
}

namespace {

std::map<std::vector<std::string>, long> ngrams(const std::vector<std::string>& toks, int n) {
  std::map<std::vector<std::string>, long> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    ++out[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  }
  return out;
}

long count_ngrams(const std::vector<std::string>& toks, int n) {
  return toks.size() >= std::size_t(n) ? long(toks.size()) - n + 1 : 0;
}

}  // namespace

Prf rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
            int n) {
  if (n < 1) throw Error("rouge n must be at least 1");
  const auto cand = ngrams(candidate, n);
  const auto ref = ngrams(reference, n);
  long overlap = 0;
  for (const auto& [gram, c] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  return make_prf(double(overlap), double(count_ngrams(candidate, n)),
                  double(count_ngrams(reference, n)));
}

Prf rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
  const std::size_t m = candidate.size(), n = reference.size();
  std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      cur[j] = candidate[i - 1] == reference[j - 1] ? prev[j - 1] + 1
                                                     : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return make_prf(double(prev[n]), double(m), double(n));
}

std::vector<Relation> relations_from_tree(const DependencyTree& tree) {
  std::vector<Relation> out;
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const int h = tree.heads[i];
    if (h > 0) out.push_back({tree.words[h - 1], tree.words[i]});
  }
  return out;
}

void EmbeddingTable::add(const std::string& word, std::vector<double> vec) {
  if (vec.empty()) throw Error("embedding for '" + word + "' is empty");
  if (dim_ == 0) dim_ = static_cast<int>(vec.size());
  if (static_cast<int>(vec.size()) != dim_) {
    throw Error("embedding for '" + word + "' has dimension " + std::to_string(vec.size()) +
                ", expected " + std::to_string(dim_));
  }
  if (contains(word)) return;
  index_.emplace(word, vectors_.size());
  vectors_.push_back(std::move(vec));
}

std::optional<double> EmbeddingTable::cosine(const std::string& a, const std::string& b) const {
  auto ia = index_.find(a), ib = index_.find(b);
  if (ia == index_.end() || ib == index_.end()) return std::nullopt;
  const auto& u = vectors_[ia->second];
  const auto& v = vectors_[ib->second];
  double dot = 0, nu = 0, nv = 0;
  for (int k = 0; k < dim_; ++k) {
    dot += u[k] * v[k];
    nu += u[k] * u[k];
    nv += v[k] * v[k];
  }
  if (nu == 0 || nv == 0) return 0.0;
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

EmbeddingTable parse_embeddings(std::istream& in, const std::string& origin) {
  EmbeddingTable table;
  std::string line;
  for (long lineno = 1; std::getline(in, line); ++lineno) {
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    std::vector<double> vec;
    std::string tok;
    const std::string where = origin + ":" + std::to_string(lineno);
    while (fields >> tok) {
      try {
        std::size_t used = 0;
        vec.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw Error(where + ": unparseable value '" + tok + "'");
      }
    }
    try {
      table.add(word, std::move(vec));
    } catch (const Error& e) {
      throw Error(where + ": " + e.what());
    }
  }
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings " + path.string());
  return parse_embeddings(in, path.string());
}

double word_similarity(const std::string& a, const std::string& b, const EmbeddingTable* table,
                       double sigma, long* missing) {
  if (a == b) return 1.0;
  if (sigma >= 1.0) return 0.0;
  const auto c = table ? table->cosine(a, b) : std::nullopt;
  if (!c) {
    if (missing) ++*missing;
    return 0.0;
  }
  // Distinct words never count as identical.
  return std::min(*c, std::nextafter(1.0, 0.0));
}

RelationMatch relation_f(const std::vector<Relation>& predicted,
                         const std::vector<Relation>& target, const EmbeddingTable* table,
                         double sigma) {
  if (!(sigma > 0 && sigma <= 1)) throw Error("sigma must lie in (0, 1]");
  RelationMatch r;
  struct Pair {
    double key;
    std::size_t i, j;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    for (std::size_t j = 0; j < target.size(); ++j) {
      const double sh =
          word_similarity(predicted[i].head, target[j].head, table, sigma, &r.missing_words);
      if (sh < sigma) continue;
      const double sd = word_similarity(predicted[i].dependent, target[j].dependent, table, sigma,
                                        &r.missing_words);
      if (sd < sigma) continue;
      pairs.push_back({std::min(sh, sd), i, j});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::tie(b.key, a.i, a.j) < std::tie(a.key, b.i, b.j);
  });
  std::vector<bool> used_p(predicted.size()), used_t(target.size());
  for (const Pair& p : pairs) {
    if (used_p[p.i] || used_t[p.j]) continue;
    used_p[p.i] = used_t[p.j] = true;
    ++r.matched;
  }
  r.prf = make_prf(double(r.matched), double(predicted.size()), double(target.size()));
  return r;
}

}  // namespace genparse
