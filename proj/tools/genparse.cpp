// Command-line entry points: oracle, convert, train, decode, eval.
#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "genparse/checkpoint.hpp"
#include "genparse/corpus.hpp"
#include "genparse/decoding.hpp"
#include "genparse/metrics.hpp"
#include "genparse/training.hpp"

namespace fs = std::filesystem;
using namespace genparse;

namespace {

using Real = float;

// Output files of the current run, removed if it fails.
std::vector<fs::path> g_outputs;

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  g_outputs.push_back(path);
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

void remove_partial_outputs() {
  std::error_code ec;
  for (const auto& p : g_outputs) fs::remove(p, ec);
}

// Reads a flat `key = value` file into `--key value` arguments. Blank lines
// and lines starting with '#' are skipped; surrounding quotes are stripped.
std::vector<std::string> read_config_args(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path.string());
  std::vector<std::string> args;
  std::string line;
  int number = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CLI::ConversionError(path.string() + ":" + std::to_string(number) +
                                 ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    std::replace(key.begin(), key.end(), '_', '-');
    args.push_back("--" + key);
    args.push_back(value);
  }
  return args;
}

// Resolved settings of a subcommand as `key = value` lines, readable by --config.
std::string resolved_config(const CLI::App& app) {
  std::ostringstream out;
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->get_lnames().empty() || opt->get_type_size() == 0) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "config" || name == "help") continue;
    std::string value = opt->count() > 0 ? opt->results().back() : opt->get_default_str();
    out << name << " = \"" << value << "\"\n";
  }
  return out.str();
}

void echo_config(const CLI::App& app, const fs::path& artifact) {
  fs::path path = artifact;
  path += ".config";
  std::ofstream out = open_output(path);
  out << resolved_config(app);
}

struct Settings {
  std::string config;
  // Paths.
  std::string input, output, train, dev, model, conll, sources, decoded, reference, embeddings,
      sweep, log;
  // Model.
  ModelConfig model_cfg;
  VocabConfig vocab_cfg;
  FilterConfig filter_cfg;
  TrainConfig train_cfg;
  BeamConfig beam_cfg;
  int workers = 0;
  std::string sigmas = "1.0,0.9,0.8,0.7";
  std::string relation_target = "source";
};

template <typename T>
CLI::Option* last_wins(CLI::App* app, const std::string& name, T& value, const std::string& help) {
  return app->add_option(name, value, help)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)
      ->capture_default_str();
}

void add_workers(CLI::App* app, Settings& s) {
  last_wins(app, "--workers", s.workers, "Worker threads (0: all cores)")
      ->check(CLI::NonNegativeNumber);
}

void add_model_options(CLI::App* app, Settings& s) {
  last_wins(app, "--hidden-size", s.model_cfg.hidden_size, "Hidden size of every LSTM")
      ->check(CLI::PositiveNumber);
  last_wins(app, "--embed-size", s.model_cfg.embed_size, "Embedding size (0: hidden size)")
      ->check(CLI::NonNegativeNumber);
  last_wins(app, "--encoder-layers", s.model_cfg.encoder_layers, "Encoder BiLSTM layers")
      ->check(CLI::PositiveNumber);
  last_wins(app, "--input-min-count", s.vocab_cfg.input_min_count,
            "Minimum source frequency for the input vocabulary")
      ->check(CLI::PositiveNumber);
  last_wins(app, "--output-max-size", s.vocab_cfg.output_max_size,
            "Size cap of the output vocabulary")
      ->check(CLI::PositiveNumber);
  last_wins(app, "--max-source", s.filter_cfg.max_source, "Longest source kept by the filter");
  last_wins(app, "--max-summary", s.filter_cfg.max_summary, "Longest summary kept by the filter");
}

void add_train_options(CLI::App* app, Settings& s) {
  TrainConfig& t = s.train_cfg;
  last_wins(app, "--batch-size", t.batch_size, "Instances per update");
  last_wins(app, "--lr", t.lr, "Adam learning rate");
  last_wins(app, "--beta1", t.beta1, "Adam first-moment decay");
  last_wins(app, "--beta2", t.beta2, "Adam second-moment decay");
  last_wins(app, "--eps", t.eps, "Adam denominator offset");
  last_wins(app, "--clip", t.clip, "Element-wise gradient clamp");
  last_wins(app, "--weight-decay", t.weight_decay, "Decoupled weight decay");
  last_wins(app, "--epochs", t.epochs, "Maximum epochs");
  last_wins(app, "--patience", t.patience, "Epochs without dev improvement before stopping");
  last_wins(app, "--seed", t.seed, "Seed for initialization and shuffling");
}

void add_beam_options(CLI::App* app, Settings& s) {
  BeamConfig& b = s.beam_cfg;
  last_wins(app, "--beam-size", b.beam_size, "Beam width (1: greedy)");
  last_wins(app, "--max-words", b.max_words, "Maximum generated words");
  last_wins(app, "--max-steps", b.max_steps, "Maximum ops (0: twice max-words)");
  last_wins(app, "--length-penalty", b.length_penalty,
            "Exponent of the op-count divisor of completed scores");
}

std::unique_ptr<Model<Real>> load_model(const std::string& path) {
  const std::string meta = read_checkpoint_metadata(path);
  auto model = Model<Real>::from_metadata(meta);
  load_checkpoint(path, model->params());
  return model;
}

std::vector<std::vector<std::string>> read_sources(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  in >> std::ws;
  const bool json = in.peek() == '{';
  in.close();
  std::vector<std::vector<std::string>> sources;
  if (json) {
    for (auto& ex : load_corpus(path)) sources.push_back(std::move(ex.source));
    return sources;
  }
  std::ifstream text(path);
  std::string line;
  while (std::getline(text, line)) {
    auto toks = tokenize(line);
    if (!toks.empty()) sources.push_back(std::move(toks));
  }
  return sources;
}

std::vector<double> parse_sigmas(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || !(v > 0 && v <= 1)) throw Error("bad sigma '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw Error("no sigma values");
  return out;
}

int run_oracle(const Settings& s, const CLI::App& app) {
  const auto corpus = load_corpus(s.input);
  FilterStats stats;
  const auto kept = filter(corpus, stats, s.filter_cfg);
  std::ofstream file;
  if (!s.output.empty()) file = open_output(s.output);
  std::ostream& out = s.output.empty() ? std::cout : file;
  for (const auto& ex : kept) {
    const TargetSequence ops = linearize(ex);
    if (!(execute(parse_ops(format_ops(ops))) == ex.summary_tree())) {
      throw Error("round trip failed for summary '" + format_ops(ops) + "'");
    }
    out << format_ops(ops) << '\n';
  }
  std::cerr << "retained " << stats.retained << " of " << corpus.size();
  for (const auto& [reason, count] : stats.rejected) std::cerr << ", " << reason << " " << count;
  std::cerr << "; all round trips exact\n";
  if (!s.output.empty()) echo_config(app, s.output);
  return 0;
}

int run_convert(const Settings& s, const CLI::App& app) {
  std::ifstream conll(s.conll), sources(s.sources);
  if (!conll) throw Error("cannot read " + s.conll);
  if (!sources) throw Error("cannot read " + s.sources);
  const auto examples = convert_conll(conll, sources);
  std::ofstream out = open_output(s.output);
  write_corpus(out, examples);
  echo_config(app, s.output);
  std::cerr << "wrote " << examples.size() << " records\n";
  return 0;
}

int run_train(const Settings& s, const CLI::App& app) {
  s.train_cfg.validate();
  FilterStats train_stats, dev_stats;
  const auto train_ex = filter(load_corpus(s.train), train_stats, s.filter_cfg);
  const auto dev_ex =
      s.dev.empty() ? std::vector<Example>{} : filter(load_corpus(s.dev), dev_stats, s.filter_cfg);
  std::cerr << "train " << train_stats.retained << " kept, " << train_stats.total_rejected()
            << " filtered; dev " << dev_ex.size() << " kept\n";
  if (train_ex.empty()) throw TrainingError("no training examples after filtering");

  ModelConfig mc = s.model_cfg;
  mc.max_source = static_cast<int>(s.filter_cfg.max_source);
  Model<Real> model(mc, build_vocab(train_ex, VocabRole::kInput, s.vocab_cfg),
                    build_vocab(train_ex, VocabRole::kOutput, s.vocab_cfg));
  model.params().initialize(s.train_cfg.seed);
  const auto train_data = make_instances(train_ex);
  const auto dev_data = make_instances(dev_ex);

  echo_config(app, s.model);
  g_outputs.push_back(s.model);
  std::ofstream log_file;
  if (!s.log.empty()) log_file = open_output(s.log);
  TrainHooks hooks;
  hooks.log = s.log.empty() ? &std::cout : &log_file;
  const TrainResult r = train(model, std::span<const Instance>(train_data),
                              std::span<const Instance>(dev_data), s.train_cfg, s.model, hooks);
  std::cerr << "best epoch " << r.best_epoch << ", dev loss " << r.best_dev_loss
            << (r.stopped_early ? ", stopped early" : "") << '\n';
  return 0;
}

int run_decode(const Settings& s, const CLI::App& app) {
  s.beam_cfg.validate();
  const auto model = load_model(s.model);
  const auto sources = read_sources(s.input);
  const Decoder<Real> decoder(*model);
  std::vector<std::string> lines(sources.size());
  std::vector<std::string> errors(sources.size());
  const long n = static_cast<long>(sources.size());
#pragma omp parallel for schedule(dynamic) num_threads(s.workers > 0 ? s.workers : omp_get_max_threads())
  for (long i = 0; i < n; ++i) {
    try {
      const auto& src = sources[i];
      const auto r = s.beam_cfg.beam_size == 1 ? decoder.greedy(src, s.beam_cfg)
                                               : decoder.beam_search(src, s.beam_cfg);
      lines[i] = format_decode_record(r);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (long i = 0; i < n; ++i) {
    if (!errors[i].empty()) throw Error("input " + std::to_string(i + 1) + ": " + errors[i]);
  }
  std::ofstream out = open_output(s.output);
  for (const auto& l : lines) out << l << '\n';
  echo_config(app, s.output);
  std::cerr << "decoded " << n << " inputs\n";
  return 0;
}

struct InstanceScores {
  Prf r1, r2, rl;
  std::vector<RelationMatch> rel;  // per sigma
  long predicted = 0, target = 0;
};

int run_eval(const Settings& s, const CLI::App& app) {
  const auto decoded = load_decode_records(s.decoded);
  const auto reference = load_corpus(s.reference);
  if (decoded.size() != reference.size()) {
    throw Error(std::to_string(decoded.size()) + " decoded records for " +
                std::to_string(reference.size()) + " references");
  }
  const auto sigmas = parse_sigmas(s.sigmas);
  std::unique_ptr<EmbeddingTable> table;
  if (!s.embeddings.empty()) table = std::make_unique<EmbeddingTable>(load_embeddings(s.embeddings));
  if (!table && sigmas.size() > 1) {
    std::cerr << "no embedding table: every sigma reduces to strict matching\n";
  }
  const bool against_source = s.relation_target == "source";
  std::vector<std::vector<Relation>> targets(reference.size());
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const Example& ex = reference[i];
    if (against_source) {
      if (ex.source_heads.empty()) {
        throw Error("reference " + std::to_string(i + 1) +
                    " has no source_heads; use --relation-target reference");
      }
      targets[i] = relations_from_tree({ex.source, ex.source_heads});
    } else {
      targets[i] = relations_from_tree(ex.summary_tree());
    }
  }

  const long n = static_cast<long>(decoded.size());
  std::vector<InstanceScores> scores(n);
#pragma omp parallel for schedule(dynamic) num_threads(s.workers > 0 ? s.workers : omp_get_max_threads())
  for (long i = 0; i < n; ++i) {
    const auto& d = decoded[i];
    const auto& ref = reference[i].summary;
    InstanceScores& sc = scores[i];
    sc.r1 = rouge_n(d.summary, ref, 1);
    sc.r2 = rouge_n(d.summary, ref, 2);
    sc.rl = rouge_l(d.summary, ref);
    const auto predicted = relations_from_tree({d.summary, d.heads});
    sc.predicted = static_cast<long>(predicted.size());
    sc.target = static_cast<long>(targets[i].size());
    for (double sigma : sigmas) sc.rel.push_back(relation_f(predicted, targets[i], table.get(), sigma));
  }

  std::ofstream out = open_output(s.output);
  out << std::setprecision(6) << std::fixed;
  out << "id\tR1_P\tR1_R\tR1_F\tR2_P\tR2_R\tR2_F\tRL_P\tRL_R\tRL_F\tREL_P\tREL_R\tREL_F\n";
  auto row = [&](const std::string& id, const std::vector<Prf>& prfs) {
    out << id;
    for (const Prf& p : prfs) out << '\t' << p.precision << '\t' << p.recall << '\t' << p.f;
    out << '\n';
  };
  std::vector<Prf> macro(4);
  auto accumulate = [](Prf& sum, const Prf& p) {
    sum.precision += p.precision;
    sum.recall += p.recall;
    sum.f += p.f;
  };
  auto divide = [](Prf p, double k) {
    if (k > 0) p = {p.precision / k, p.recall / k, p.f / k};
    return p;
  };
  long missing = 0;
  for (long i = 0; i < n; ++i) {
    const auto& sc = scores[i];
    const std::vector<Prf> prfs{sc.r1, sc.r2, sc.rl, sc.rel[0].prf};
    row(std::to_string(i + 1), prfs);
    for (int k = 0; k < 4; ++k) accumulate(macro[k], prfs[k]);
    for (const auto& r : sc.rel) missing += r.missing_words;
  }
  std::vector<Prf> macro_avg;
  for (const Prf& p : macro) macro_avg.push_back(divide(p, double(n)));
  row("macro", macro_avg);

  // Pooled relation scores over the whole corpus, per sigma.
  std::vector<Prf> pooled;
  for (std::size_t k = 0; k < sigmas.size(); ++k) {
    double matched = 0, predicted = 0, target = 0;
    for (const auto& sc : scores) {
      matched += sc.rel[k].matched;
      predicted += sc.predicted;
      target += sc.target;
    }
    pooled.push_back(make_prf(matched, predicted, target));
  }
  out << "pooled\t-\t-\t-\t-\t-\t-\t-\t-\t-\t" << pooled[0].precision << '\t' << pooled[0].recall
      << '\t' << pooled[0].f << '\n';

  if (!s.sweep.empty()) {
    std::ofstream sw = open_output(s.sweep);
    sw << std::setprecision(6) << std::fixed << "sigma\tP\tR\tF\n";
    for (std::size_t k = 0; k < sigmas.size(); ++k) {
      Prf sum;
      for (const auto& sc : scores) accumulate(sum, sc.rel[k].prf);
      const Prf m = divide(sum, double(n));
      sw << std::setprecision(2) << sigmas[k] << std::setprecision(6) << '\t' << m.precision << '\t'
         << m.recall << '\t' << m.f << '\n';
    }
  }
  echo_config(app, s.output);
  if (missing > 0) std::cerr << missing << " word comparisons fell back to string equality\n";
  std::cerr << std::setprecision(4) << "R1 " << macro_avg[0].f << "  R2 " << macro_avg[1].f
            << "  RL " << macro_avg[2].f << "  REL(sigma " << sigmas[0] << ") " << macro_avg[3].f
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Settings s;
  CLI::App app{"Joint summarization and dependency parsing"};
  app.require_subcommand(1);

  auto* oracle = app.add_subcommand("oracle", "Print gold op sequences of a corpus and verify round trips");
  last_wins(oracle, "--input", s.input, "Corpus file")->required()->check(CLI::ExistingFile);
  last_wins(oracle, "--output", s.output, "Output file (default: standard output)");
  last_wins(oracle, "--max-source", s.filter_cfg.max_source, "Longest source kept by the filter");
  last_wins(oracle, "--max-summary", s.filter_cfg.max_summary, "Longest summary kept by the filter");

  auto* convert = app.add_subcommand("convert", "Convert CoNLL-style parses plus source texts to a corpus");
  last_wins(convert, "--conll", s.conll, "Tab-separated token/head file")->required()->check(CLI::ExistingFile);
  last_wins(convert, "--sources", s.sources, "One source text per line")->required()->check(CLI::ExistingFile);
  last_wins(convert, "--output", s.output, "Corpus file to write")->required();

  auto* train = app.add_subcommand("train", "Fit a model");
  last_wins(train, "--train", s.train, "Training corpus")->required()->check(CLI::ExistingFile);
  last_wins(train, "--dev", s.dev, "Development corpus (default: the training corpus)")
      ->check(CLI::ExistingFile);
  last_wins(train, "--model", s.model, "Checkpoint to write")->required();
  last_wins(train, "--log", s.log, "Epoch log file (default: standard output)");
  add_model_options(train, s);
  add_train_options(train, s);

  auto* decode = app.add_subcommand("decode", "Beam search over the sources of a file");
  last_wins(decode, "--model", s.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  last_wins(decode, "--input", s.input, "Corpus file or one source text per line")
      ->required()
      ->check(CLI::ExistingFile);
  last_wins(decode, "--output", s.output, "Decode records to write")->required();
  add_beam_options(decode, s);
  add_workers(decode, s);

  auto* eval = app.add_subcommand("eval", "ROUGE and relation F of decode records");
  last_wins(eval, "--decoded", s.decoded, "Decode records")->required()->check(CLI::ExistingFile);
  last_wins(eval, "--reference", s.reference, "Reference corpus aligned with the records")
      ->required()
      ->check(CLI::ExistingFile);
  last_wins(eval, "--output", s.output, "Per-instance report to write")->required();
  last_wins(eval, "--embeddings", s.embeddings, "Word vectors for lenient matching")
      ->check(CLI::ExistingFile);
  last_wins(eval, "--sigma", s.sigmas, "Comma-separated thresholds; the first drives the report");
  last_wins(eval, "--sweep", s.sweep, "Threshold sweep file to write");
  last_wins(eval, "--relation-target", s.relation_target,
            "Relations to preserve: parsed source or reference summary")
      ->check(CLI::IsMember({"source", "reference"}));
  add_workers(eval, s);

  for (CLI::App* sub : {oracle, convert, train, decode, eval}) {
    sub->add_option("--config", s.config,
                    "File of key = value lines; flags on the command line take precedence");
  }

  // Expand every --config file in place, ahead of the command-line flags so
  // the later flags win.
  std::vector<std::string> args;
  std::vector<std::string> config_args;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    std::string path;
    if (a == "--config" && i + 1 < argc) {
      path = argv[++i];
    } else if (a.rfind("--config=", 0) == 0) {
      path = a.substr(9);
    } else {
      args.push_back(a);
      continue;
    }
    try {
      const auto extra = read_config_args(path);
      config_args.insert(config_args.end(), extra.begin(), extra.end());
    } catch (const CLI::Error& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 2;
    }
  }
  if (!config_args.empty()) {
    if (args.empty()) {
      std::cerr << "error: a subcommand is required\n";
      return 2;
    }
    args.insert(args.begin() + 1, config_args.begin(), config_args.end());
  }
  std::vector<const char*> argv2{argv[0]};
  for (const auto& a : args) argv2.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv2.size()), argv2.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*oracle) return run_oracle(s, *oracle);
    if (*convert) return run_convert(s, *convert);
    if (*train) return run_train(s, *train);
    if (*decode) return run_decode(s, *decode);
    if (*eval) return run_eval(s, *eval);
  } catch (const std::exception& e) {
    remove_partial_outputs();
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
