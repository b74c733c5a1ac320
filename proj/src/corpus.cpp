#include "genparse/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace genparse {

using nlohmann::json;

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
  add("<root>");
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) : Vocabulary() {
  for (const auto& t : tokens) {
    if (contains(t)) throw CorpusError("duplicate vocabulary token '" + t + "'");
    add(t);
  }
}

void Vocabulary::add(const std::string& token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

std::uint64_t Vocabulary::hash() const {
  // FNV-1a over the newline-joined token list.
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= '\n';
    h *= 1099511628211ull;
  }
  return h;
}

Vocabulary build_vocab(const std::vector<Example>& corpus, VocabRole role,
                       const VocabConfig& config) {
  if (corpus.empty()) throw CorpusError("cannot build a vocabulary from an empty corpus");
  std::unordered_map<std::string, long> counts;
  for (const auto& ex : corpus) {
    for (const auto& t : role == VocabRole::kInput ? ex.source : ex.summary) ++counts[t];
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens;
  for (const auto& [tok, n] : ranked) {
    if (role == VocabRole::kInput && n < config.input_min_count) break;
    if (role == VocabRole::kOutput && static_cast<int>(tokens.size()) >= config.output_max_size)
      break;
    tokens.push_back(tok);
  }
  Vocabulary base;
  std::erase_if(tokens, [&](const std::string& t) { return base.contains(t); });
  return Vocabulary(tokens);
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    std::transform(tok.begin(), tok.end(), tok.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.push_back(std::move(tok));
  }
  return out;
}

namespace {

std::vector<int> read_int_list(const json& j, const char* field, const std::string& where) {
  if (!j.is_array()) throw CorpusError(where + ": field '" + field + "' must be a list");
  std::vector<int> out;
  for (const auto& v : j) {
    if (!v.is_number_integer()) {
      throw CorpusError(where + ": field '" + field + "' must hold integers");
    }
    out.push_back(v.get<int>());
  }
  return out;
}

}  // namespace

std::vector<Example> parse_corpus(std::istream& in, const std::string& origin) {
  std::vector<Example> out;
  std::string line;
  for (long lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw CorpusError(where + ": malformed record: " + e.what());
    }
    if (!j.is_object()) throw CorpusError(where + ": record is not an object");
    for (const char* field : {"source", "summary", "heads"}) {
      if (!j.contains(field)) throw CorpusError(where + ": missing field '" + field + "'");
    }
    if (!j["source"].is_string() || !j["summary"].is_string()) {
      throw CorpusError(where + ": 'source' and 'summary' must be strings");
    }
    Example ex;
    ex.source = tokenize(j["source"].get<std::string>());
    ex.summary = tokenize(j["summary"].get<std::string>());
    ex.heads = read_int_list(j["heads"], "heads", where);
    if (ex.heads.size() != ex.summary.size()) {
      throw CorpusError(where + ": " + std::to_string(ex.heads.size()) + " heads for " +
                        std::to_string(ex.summary.size()) + " summary tokens");
    }
    for (int h : ex.heads) {
      if (h < 0 || h > static_cast<int>(ex.summary.size())) {
        throw CorpusError(where + ": head index " + std::to_string(h) + " out of range");
      }
    }
    if (j.contains("source_heads")) {
      ex.source_heads = read_int_list(j["source_heads"], "source_heads", where);
      if (ex.source_heads.size() != ex.source.size()) {
        throw CorpusError(where + ": source_heads length differs from source length");
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus " + path.string());
  return parse_corpus(in, path.string());
}

namespace {

std::string join(const std::vector<std::string>& toks) {
  std::string s;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) s += ' ';
    s += toks[i];
  }
  return s;
}

}  // namespace

void write_corpus(std::ostream& out, const std::vector<Example>& corpus) {
  for (const auto& ex : corpus) {
    json j;
    j["source"] = join(ex.source);
    j["summary"] = join(ex.summary);
    j["heads"] = ex.heads;
    if (!ex.source_heads.empty()) j["source_heads"] = ex.source_heads;
    out << j.dump() << '\n';
  }
}

TargetSequence linearize(const Example& ex) { return oracle(ex.summary_tree()); }

std::size_t FilterStats::total_rejected() const {
  std::size_t n = 0;
  for (const auto& [reason, count] : rejected) n += count;
  return n;
}

std::vector<Example> filter(const std::vector<Example>& examples, FilterStats& stats,
                            const FilterConfig& config) {
  std::vector<Example> kept;
  for (const auto& ex : examples) {
    const char* reason = nullptr;
    if (ex.source.empty() || ex.summary.empty()) {
      reason = "empty";
    } else if (ex.source.size() > config.max_source || ex.summary.size() > config.max_summary) {
      reason = "over-length";
    } else {
      const DependencyTree tree = ex.summary_tree();
      try {
        check_well_formed(tree);
        if (count_root_children(tree) != 1) {
          reason = "multi-root";
        } else if (!is_projective(tree)) {
          reason = "non-projective";
        }
      } catch (const Error&) {
        reason = "malformed";
      }
    }
    if (reason) {
      ++stats.rejected[reason];
    } else {
      kept.push_back(ex);
      ++stats.retained;
    }
  }
  return kept;
}

std::vector<DependencyTree> read_conll(std::istream& in) {
  std::vector<DependencyTree> trees;
  DependencyTree cur;
  std::string line;
  long lineno = 0;
  auto flush = [&] {
    if (!cur.words.empty()) trees.push_back(std::move(cur));
    cur = DependencyTree{};
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      continue;
    }
    if (line[0] == '#') continue;
    std::vector<std::string> cols;
    std::istringstream fields(line);
    std::string col;
    while (std::getline(fields, col, '\t')) cols.push_back(col);
    std::string form, head;
    if (cols.size() >= 7) {
      // Multiword ranges and empty nodes carry no head.
      if (cols[0].find_first_of("-.") != std::string::npos) continue;
      form = cols[1];
      head = cols[6];
    } else if (cols.size() == 2) {
      form = cols[0];
      head = cols[1];
    } else {
      throw CorpusError("conll line " + std::to_string(lineno) + ": expected 2 or >= 7 columns");
    }
    try {
      std::size_t used = 0;
      const int h = std::stoi(head, &used);
      if (used != head.size()) throw std::invalid_argument(head);
      cur.heads.push_back(h);
    } catch (const std::exception&) {
      throw CorpusError("conll line " + std::to_string(lineno) + ": bad head '" + head + "'");
    }
    auto lowered = tokenize(form);
    if (lowered.size() != 1) {
      throw CorpusError("conll line " + std::to_string(lineno) + ": bad token '" + form + "'");
    }
    cur.words.push_back(lowered[0]);
  }
  flush();
  return trees;
}

std::vector<Example> convert_conll(std::istream& conll, std::istream& sources) {
  const auto trees = read_conll(conll);
  std::vector<Example> out;
  std::string line;
  for (const auto& tree : trees) {
    if (!std::getline(sources, line)) {
      throw CorpusError("source file has fewer lines than the conll file has sentences (" +
                        std::to_string(trees.size()) + ")");
    }
    Example ex;
    ex.source = tokenize(line);
    ex.summary = tree.words;
    ex.heads = tree.heads;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace genparse
