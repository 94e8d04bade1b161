#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spacefmt/spacefmt.hpp"

namespace spacefmt::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitInput = 2,
  kExitModel = 3,
  kExitThreshold = 4,
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// `key = value` lines; '#' starts a comment line. Keys are long flag names
/// without the leading dashes.
inline std::vector<std::pair<std::string, std::string>> parse_config(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("expected 'key = value'", line_no);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.starts_with("--")) key.erase(0, 2);
    if (key.empty()) throw FormatError("empty key", line_no);
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

inline std::array<double, 3> parse_ratios(const std::string& s) {
  std::array<double, 3> r{};
  std::istringstream in(s);
  std::string field;
  std::size_t i = 0;
  while (std::getline(in, field, ',')) {
    if (i == 3) throw UsageError("--ratios takes exactly three values");
    try {
      std::size_t used = 0;
      r[i] = std::stod(field, &used);
      if (used != field.size()) throw std::invalid_argument(field);
    } catch (const std::exception&) {
      throw UsageError("bad ratio '" + field + "'");
    }
    ++i;
  }
  if (i != 3) throw UsageError("--ratios takes exactly three values");
  return r;
}

/// A corpus argument is either a directory (every file with extension `ext`
/// below it, in path order) or a manifest listing one path per line.
inline std::vector<std::string> corpus_paths(const std::string& arg, const std::string& ext) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (fs::is_directory(arg, ec)) {
    std::vector<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(arg)) {
      if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
  }
  return read_manifest(arg);
}

inline std::string format_label(SpacingClass c) { return to_string(c); }

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(int argc, const char* const* argv) {
    try {
      return dispatch(argc, argv);
    } catch (const UsageError& e) {
      err_ << "error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const std::invalid_argument& e) {
      err_ << "error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const ModelIoError& e) {
      err_ << "model error: " << e.what() << '\n';
      return kExitModel;
    } catch (const VocabMismatch& e) {
      err_ << "model error: " << e.what() << '\n';
      return kExitModel;
    } catch (const DivergenceError& e) {
      err_ << "training error: " << e.what() << '\n';
      return kExitModel;
    } catch (const Error& e) {
      err_ << "error: " << e.what() << '\n';
      return kExitInput;
    } catch (const std::filesystem::filesystem_error& e) {
      err_ << "error: " << e.what() << '\n';
      return kExitInput;
    }
  }

 private:
  struct CorpusOpts {
    std::string corpus;
    std::string ext = ".v";
    bool import = false;
    std::string keywords;
    unsigned threads = 1;
  };
  struct SplitOpts {
    std::string split_file;
    std::string ratios = "0.8,0.1,0.1";
    std::uint64_t seed = 1;
  };

  std::ostream& out_;
  std::ostream& err_;
  std::map<std::string, std::size_t> from_config_;

  // -- option helpers -----------------------------------------------------

  static void add_corpus(CLI::App* sub, CorpusOpts& o) {
    sub->add_option("--corpus", o.corpus, "corpus directory or manifest file")->required();
    sub->add_option("--ext", o.ext, "file extension collected from a corpus directory")
        ->capture_default_str();
    sub->add_flag("--import", o.import, "corpus files are token streams, not source");
    add_keywords(sub, o.keywords);
    sub->add_option("--threads", o.threads, "worker threads")->capture_default_str()
        ->check(CLI::Range(1u, 256u));
  }
  static void add_keywords(CLI::App* sub, std::string& dir) {
    sub->add_option("--keywords", dir,
                    "directory holding vernacular.txt, ltac.txt and gallina.txt "
                    "(default: built-in tables)");
  }
  static void add_split(CLI::App* sub, SplitOpts& o) {
    sub->add_option("--split", o.split_file, "split record written by 'split'");
    sub->add_option("--ratios", o.ratios, "train,validation,test ratios")->capture_default_str();
    sub->add_option("--seed", o.seed, "seed for splitting and training")->capture_default_str();
  }

  bool given(const CLI::App* sub, const std::string& name) const {
    const auto* opt = sub->get_option_no_throw("--" + name);
    if (opt == nullptr) return false;
    const auto it = from_config_.find(name);
    return opt->count() > (it == from_config_.end() ? 0 : it->second);
  }

  static KeywordTables tables(const std::string& dir) {
    return dir.empty() ? KeywordTables::builtin() : KeywordTables::load(dir);
  }

  Corpus load_corpus(const CorpusOpts& o) const {
    const auto kw = tables(o.keywords);
    auto build = build_corpus(corpus_paths(o.corpus, o.ext),
                              o.import ? CorpusMode::Import : CorpusMode::Lex, kw, o.threads);
    for (const auto& s : build.skipped) err_ << "skipped " << s.path << ": " << s.reason << '\n';
    return std::move(build.corpus);
  }

  static CorpusSplit resolve_split(const Corpus& corpus, const SplitOpts& o) {
    if (!o.split_file.empty()) return parse_split(read_file(o.split_file), corpus);
    return split_corpus(corpus, parse_ratios(o.ratios), o.seed);
  }

  static std::vector<const LexedDocument*> part(const Corpus& c,
                                                const std::vector<std::size_t>& idx) {
    std::vector<const LexedDocument*> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(&c.documents[i].doc);
    return out;
  }

  void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
      out_ << text;
    } else {
      write_file(path, text);
    }
  }

  // -- dispatch -------------------------------------------------------------

  int dispatch(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);

    // --config is resolved first; its entries are inserted right after the
    // subcommand so that later command-line flags win.
    std::string config_path;
    for (std::size_t i = 0; i < args.size();) {
      if (args[i] == "--config" && i + 1 < args.size()) {
        config_path = args[i + 1];
        args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                   args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      } else if (args[i].starts_with("--config=")) {
        config_path = args[i].substr(9);
        args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      } else if (args[i] == "--config") {
        throw UsageError("--config needs a file");
      } else {
        ++i;
      }
    }

    CLI::App app{"Learned whitespace formatter for Coq sources", "spacefmt"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    app.footer("Every subcommand also takes --config FILE with 'key = value' lines; "
               "command-line flags override it.\n"
               "Exit codes: 0 ok, 1 usage, 2 input/format, 3 model, 4 threshold.");

    // lex
    std::string lex_file, lex_out, lex_kw;
    auto* lex_cmd = app.add_subcommand("lex", "lex one file and write its token stream");
    lex_cmd->add_option("file", lex_file, "source file")->required();
    lex_cmd->add_option("--out", lex_out, "output file (default: stdout)");
    add_keywords(lex_cmd, lex_kw);

    // stats
    CorpusOpts stats_c;
    int stats_min_count = 2, stats_top = 20;
    auto* stats_cmd = app.add_subcommand("stats", "token and label frequency summary");
    add_corpus(stats_cmd, stats_c);
    stats_cmd->add_option("--min-count", stats_min_count, "vocabulary cutoff")
        ->capture_default_str();
    stats_cmd->add_option("--top", stats_top, "rows in the frequency tables")
        ->capture_default_str();

    // split
    CorpusOpts split_c;
    std::string split_ratios = "0.8,0.1,0.1", split_out;
    std::uint64_t split_seed = 1;
    auto* split_cmd = app.add_subcommand("split", "write a train/validation/test split record");
    add_corpus(split_cmd, split_c);
    split_cmd->add_option("--ratios", split_ratios, "train,validation,test ratios")
        ->capture_default_str();
    split_cmd->add_option("--seed", split_seed, "shuffle seed")->capture_default_str();
    split_cmd->add_option("--out", split_out, "output file (default: stdout)");

    // train
    CorpusOpts train_c;
    SplitOpts train_s;
    std::string train_kind, train_out;
    int min_count = 2;
    NgramOptions ngram_opts;
    BrnnDims dims;
    TrainingConfig tc;
    auto* train_cmd = app.add_subcommand("train", "train an n-gram or BRNN model");
    add_corpus(train_cmd, train_c);
    add_split(train_cmd, train_s);
    train_cmd->add_option("--model", train_kind, "ngram or brnn")
        ->required()
        ->check(CLI::IsMember({"ngram", "brnn"}));
    train_cmd->add_option("--out", train_out, "model file")->required();
    train_cmd->add_option("--min-count", min_count, "vocabulary cutoff")->capture_default_str();
    train_cmd->add_option("--order", ngram_opts.order, "n-gram order (ngram)")
        ->capture_default_str();
    train_cmd->add_option("--backoff", ngram_opts.backoff, "backoff factor (ngram)")
        ->capture_default_str();
    train_cmd->add_option("--embed", dims.embed, "embedding size (brnn)")->capture_default_str();
    train_cmd->add_option("--hidden", dims.hidden, "hidden size (brnn)")->capture_default_str();
    train_cmd->add_option("--lr", tc.learning_rate, "Adam learning rate (brnn)")
        ->capture_default_str();
    train_cmd->add_option("--clip", tc.gradient_clip_norm, "global gradient norm cap (brnn)")
        ->capture_default_str();
    train_cmd->add_option("--epochs", tc.max_epochs, "maximum epochs (brnn)")
        ->capture_default_str();
    train_cmd->add_option("--patience", tc.early_stop_patience, "early-stop patience (brnn)")
        ->capture_default_str();
    train_cmd->add_option("--segment", tc.segment_length, "segment length (brnn)")
        ->capture_default_str();
    train_cmd->add_option("--overlap", tc.segment_overlap, "segment overlap (brnn)")
        ->capture_default_str();

    // eval
    CorpusOpts eval_c;
    SplitOpts eval_s;
    std::vector<std::string> eval_models, eval_names;
    std::string eval_part = "test", eval_out;
    double min_top1 = -1;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate models on a split part");
    add_corpus(eval_cmd, eval_c);
    add_split(eval_cmd, eval_s);
    eval_cmd->add_option("--models", eval_models, "model files")
        ->required()
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    eval_cmd->add_option("--names", eval_names, "report names, one per model")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    eval_cmd->add_option("--part", eval_part, "split part to evaluate")
        ->capture_default_str()
        ->check(CLI::IsMember({"train", "validation", "test"}));
    eval_cmd->add_option("--out", eval_out, "flat metrics file (default: stdout)");
    eval_cmd->add_option("--min-top1", min_top1,
                         "exit 4 when any model's overall top-1 is below this");

    // gradcheck
    BrnnDims gc_dims{4, 6};
    std::uint64_t gc_seed = 0;
    double gc_eps = 1e-5, gc_tol = 1e-4;
    std::size_t gc_samples = 200;
    auto* gc_cmd = app.add_subcommand("gradcheck", "check BRNN gradients on a fresh small model");
    gc_cmd->add_option("--embed", gc_dims.embed, "embedding size")->capture_default_str();
    gc_cmd->add_option("--hidden", gc_dims.hidden, "hidden size")->capture_default_str();
    gc_cmd->add_option("--seed", gc_seed, "model, data and sampling seed")->capture_default_str();
    gc_cmd->add_option("--epsilon", gc_eps, "finite-difference step")
        ->capture_default_str()
        ->check(CLI::Range(1e-7, 1e-3));
    gc_cmd->add_option("--samples", gc_samples, "sampled coordinates")->capture_default_str();
    gc_cmd->add_option("--tolerance", gc_tol, "exit 4 above this relative error")
        ->capture_default_str();

    // suggest
    std::string sg_model, sg_kw;
    std::vector<std::string> sg_files;
    auto* sg_cmd = app.add_subcommand("suggest", "print slots where the model disagrees");
    sg_cmd->add_option("--model", sg_model, "model file")->required();
    sg_cmd->add_option("files", sg_files, "source files")
        ->required()
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    add_keywords(sg_cmd, sg_kw);

    // reformat
    std::string rf_model, rf_file, rf_out, rf_kw;
    auto* rf_cmd = app.add_subcommand("reformat", "re-space a file with the model's choices");
    rf_cmd->add_option("--model", rf_model, "model file")->required();
    rf_cmd->add_option("file", rf_file, "source file")->required();
    rf_cmd->add_option("--out", rf_out, "output file (default: stdout)");
    add_keywords(rf_cmd, rf_kw);

    // synth
    std::size_t sy_count = 200;
    std::uint64_t sy_seed = 42;
    std::string sy_out;
    auto* sy_cmd = app.add_subcommand("synth", "write a synthetic corpus in one fixed style");
    sy_cmd->add_option("--count", sy_count, "number of files")->capture_default_str();
    sy_cmd->add_option("--seed", sy_seed, "generator seed")->capture_default_str();
    sy_cmd->add_option("--out", sy_out, "output directory")->required();

    if (!config_path.empty()) {
      if (args.empty()) throw UsageError("--config needs a subcommand");
      auto* sub = app.get_subcommand_no_throw(args.front());
      if (sub == nullptr) throw UsageError("unknown subcommand '" + args.front() + "'");
      std::set<std::string> known;
      for (auto* s : app.get_subcommands({})) {
        for (const auto* o : s->get_options()) {
          for (const auto& n : o->get_lnames()) known.insert(n);
        }
      }
      std::vector<std::string> inserted;
      for (const auto& [key, value] : parse_config(read_file(config_path))) {
        if (!known.contains(key)) throw UsageError("unknown config key '" + key + "'");
        const auto* opt = sub->get_option_no_throw("--" + key);
        if (opt == nullptr) continue;  // belongs to another subcommand
        ++from_config_[key];
        inserted.push_back("--" + key + "=" + value);
      }
      args.insert(args.begin() + 1, inserted.begin(), inserted.end());
    }

    try {
      std::vector<std::string> rev(args.rbegin(), args.rend());
      app.parse(rev);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out_, err_);
      return code == 0 ? kExitOk : kExitUsage;
    }

    if (lex_cmd->parsed()) return cmd_lex(lex_file, lex_out, lex_kw);
    if (stats_cmd->parsed()) return cmd_stats(stats_c, stats_min_count, stats_top);
    if (split_cmd->parsed()) {
      const Corpus corpus = load_corpus(split_c);
      const auto split = split_corpus(corpus, parse_ratios(split_ratios), split_seed);
      emit(split_out, format_split(split, corpus));
      return kExitOk;
    }
    if (train_cmd->parsed()) {
      const bool brnn = train_kind == "brnn";
      for (const char* k : {"order", "backoff"}) {
        if (brnn && given(train_cmd, k)) {
          throw UsageError(std::string("--") + k + " applies to --model ngram only");
        }
      }
      for (const char* k : {"embed", "hidden", "lr", "clip", "epochs", "patience", "segment",
                            "overlap"}) {
        if (!brnn && given(train_cmd, k)) {
          throw UsageError(std::string("--") + k + " applies to --model brnn only");
        }
      }
      check_split_flags(train_cmd);
      return cmd_train(train_c, train_s, brnn, train_out, min_count, ngram_opts, dims, tc);
    }
    if (eval_cmd->parsed()) {
      check_split_flags(eval_cmd);
      if (!eval_names.empty() && eval_names.size() != eval_models.size()) {
        throw UsageError("--names needs one name per model");
      }
      return cmd_eval(eval_c, eval_s, eval_models, eval_names, eval_part, eval_out, min_top1);
    }
    if (gc_cmd->parsed()) return cmd_gradcheck(gc_dims, gc_seed, gc_eps, gc_samples, gc_tol);
    if (sg_cmd->parsed()) return cmd_suggest(sg_model, sg_files, sg_kw);
    if (rf_cmd->parsed()) {
      const auto predictor = load_predictor(rf_model);
      const auto doc = lex(read_file(rf_file), tables(rf_kw));
      emit(rf_out, reformat(*predictor, doc));
      return kExitOk;
    }
    if (sy_cmd->parsed()) return cmd_synth(sy_count, sy_seed, sy_out);
    return kExitUsage;
  }

  void check_split_flags(const CLI::App* sub) const {
    if (given(sub, "split") && given(sub, "ratios")) {
      throw UsageError("--split and --ratios are mutually exclusive");
    }
  }

  // -- subcommands ----------------------------------------------------------

  int cmd_lex(const std::string& file, const std::string& out, const std::string& kw) {
    emit(out, export_token_stream(lex(read_file(file), tables(kw))));
    return kExitOk;
  }

  int cmd_stats(const CorpusOpts& c, int min_count, int top) {
    const Corpus corpus = load_corpus(c);
    std::vector<const LexedDocument*> all;
    for (const auto& d : corpus.documents) all.push_back(&d.doc);
    const auto vocab = build_vocab(all, min_count);
    const auto labels = build_label_vocab(all);
    std::map<char, std::uint64_t> kinds;
    std::uint64_t tokens = 0;
    for (const auto* d : all) {
      tokens += d->size();
      for (const auto& item : d->items) ++kinds[kind_char(item.token.kind)];
    }
    out_ << "documents " << corpus.size() << '\n'
         << "tokens " << tokens << '\n'
         << "vocabulary " << vocab.size() << " (min-count " << min_count
         << ", including <unk>)\n"
         << "unk-tokens " << vocab.count(Vocabulary::kUnk) << '\n'
         << "labels " << labels.size() << '\n';
    for (const auto& [k, n] : kinds) out_ << "kind " << k << ' ' << n << '\n';
    const auto rows = static_cast<std::uint32_t>(std::max(0, top));
    for (std::uint32_t i = 0; i < labels.size() && i < rows; ++i) {
      char pct[32];
      std::snprintf(pct, sizeof pct, "%.2f%%",
                    100.0 * static_cast<double>(labels.count(i)) / static_cast<double>(tokens));
      out_ << "label " << format_label(labels.cls(i)) << ' ' << labels.count(i) << ' ' << pct
           << '\n';
    }
    for (std::uint32_t i = 1; i < vocab.size() && i <= rows; ++i) {
      out_ << "token " << escape_field(vocab.lexeme(i)) << ' ' << vocab.count(i) << '\n';
    }
    return kExitOk;
  }

  int cmd_train(const CorpusOpts& c, const SplitOpts& s, bool brnn, const std::string& out,
                int min_count, NgramOptions ngram_opts, BrnnDims dims, TrainingConfig tc) {
    const Corpus corpus = load_corpus(c);
    const auto split = resolve_split(corpus, s);
    const auto train = part(corpus, split.train);
    if (train.empty()) throw DegenerateSplit("training part is empty");
    const auto vocab = build_vocab(train, min_count);
    const auto labels = build_label_vocab(train);
    std::vector<EncodedDocument> enc;
    for (const auto* d : train) enc.push_back(encode(*d, vocab, labels));
    if (!brnn) {
      NgramModel::train(enc, vocab, labels, ngram_opts).save(out);
      err_ << "trained ngram (order " << ngram_opts.order << ") on " << train.size()
           << " documents\n";
      return kExitOk;
    }
    std::vector<EncodedDocument> val;
    for (const auto* d : part(corpus, split.validation)) val.push_back(encode(*d, vocab, labels));
    tc.seed = s.seed;
    tc.validate();
    auto model = BrnnModel::init(dims, vocab, labels, s.seed, tc.layout());
    const auto result = train_brnn(std::move(model), enc, val, tc, [&](int e, const EpochStats& st) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "epoch %d loss %.6f val-top1 %.4f\n", e, st.train_loss,
                    st.val_top1);
      err_ << buf;
    });
    result.model.save(out);
    err_ << "best epoch " << result.best_epoch << '\n';
    return kExitOk;
  }

  int cmd_eval(const CorpusOpts& c, const SplitOpts& s, const std::vector<std::string>& models,
               const std::vector<std::string>& names, const std::string& part_name,
               const std::string& out, double min_top1) {
    const Corpus corpus = load_corpus(c);
    const auto split = resolve_split(corpus, s);
    const auto& idx = part_name == "train"        ? split.train
                      : part_name == "validation" ? split.validation
                                                  : split.test;
    const auto docs = part(corpus, idx);
    if (docs.empty()) throw DegenerateSplit(part_name + " part is empty");

    std::vector<EvalReport> reports;
    std::set<std::string> used;
    for (std::size_t i = 0; i < models.size(); ++i) {
      auto predictor = load_predictor(models[i]);
      std::string name = names.empty() ? predictor->name() : names[i];
      if (names.empty() && used.contains(name)) {
        name = std::filesystem::path(models[i]).stem().string();
      }
      if (!used.insert(name).second) throw UsageError("duplicate report name '" + name + "'");
      const auto prepared = prepare_eval(*predictor, docs);
      auto report = evaluate(*predictor, prepared, part_name, c.threads);
      report.predictor = name;
      reports.push_back(std::move(report));
    }
    out_ << render_report(reports, ReportStyle::HumanTable) << kCategoryNotes;
    const std::string flat = render_report(reports, ReportStyle::FlatMetrics);
    if (out.empty() || out == "-") {
      out_ << '\n' << flat;
    } else {
      write_file(out, flat);
    }
    if (min_top1 >= 0) {
      for (const auto& r : reports) {
        const double acc = r.accuracy("all").value_or(0.0);
        if (acc < min_top1) {
          err_ << r.predictor << ": top-1 " << acc << " below --min-top1 " << min_top1 << '\n';
          return kExitThreshold;
        }
      }
    }
    return kExitOk;
  }

  int cmd_gradcheck(BrnnDims dims, std::uint64_t seed, double eps, std::size_t samples,
                    double tol) {
    const auto f = make_gradcheck_fixture(dims, seed);
    const auto r = gradient_check(f.model, f.doc, f.pos, eps, samples, seed);
    char buf[128];
    std::snprintf(buf, sizeof buf, "max relative error %.3e over %zu coordinates\n",
                  r.max_relative_error, r.coordinates);
    out_ << buf;
    return r.max_relative_error <= tol ? kExitOk : kExitThreshold;
  }

  int cmd_suggest(const std::string& model, const std::vector<std::string>& files,
                  const std::string& kw) {
    const auto predictor = load_predictor(model);
    const auto kwt = tables(kw);
    for (const auto& file : files) {
      const auto doc = lex(read_file(file), kwt);
      const auto enc = predictor->encode(doc);
      const auto rankings = predictor->rank_slots(enc);
      for (std::size_t i = 0; i < rankings.size(); ++i) {
        const auto& r = rankings[i];
        const SpacingClass actual = doc.items[i].label.cls();
        const SpacingClass best = predictor->labels().cls(r.front().label);
        if (!enc.label_oov[i] && r.front().label == enc.label_id(i)) continue;
        const auto& tok = doc.items[i].token;
        std::string line = file + ":" + std::to_string(tok.line) + ":" +
                           std::to_string(tok.col) + "  actual=" + format_label(actual) +
                           "  suggested=" + format_label(best) + "  top3=[";
        for (std::size_t k = 0; k < std::min<std::size_t>(3, r.size()); ++k) {
          char p[32];
          std::snprintf(p, sizeof p, "@%.3f", r[k].score);
          if (k > 0) line += ' ';
          line += format_label(predictor->labels().cls(r[k].label)) + p;
        }
        out_ << line << "]\n";
      }
    }
    return kExitOk;
  }

  int cmd_synth(std::size_t count, std::uint64_t seed, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::string manifest;
    for (const auto& [name, text] : synthetic::generate_corpus(count, seed)) {
      write_file(std::filesystem::path(dir) / name, text);
      manifest += name + "\n";
    }
    write_file(std::filesystem::path(dir) / "corpus.txt", manifest);
    err_ << "wrote " << count << " files to " << dir << '\n';
    return kExitOk;
  }
};

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return Runner(out, err).run(argc, argv);
}

}  // namespace spacefmt::cli
