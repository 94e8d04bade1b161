#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "spacefmt/errors.hpp"
#include "spacefmt/lexer.hpp"
#include "spacefmt/random.hpp"

namespace spacefmt {

enum class CorpusOrigin { LexedFromSource, ImportedStream };

struct CorpusDocument {
  std::string path;
  LexedDocument doc;
};

struct Corpus {
  std::vector<CorpusDocument> documents;
  CorpusOrigin origin = CorpusOrigin::LexedFromSource;

  std::size_t size() const { return documents.size(); }
};

struct SkippedFile {
  std::string path;
  std::string reason;
};

struct CorpusBuild {
  Corpus corpus;
  std::vector<SkippedFile> skipped;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading " + path.string());
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("error writing " + path.string());
}

/// Reads a corpus manifest: one path per line. Relative paths are taken
/// relative to the manifest's directory.
inline std::vector<std::string> read_manifest(const std::filesystem::path& manifest) {
  const std::string text = read_file(manifest);
  const auto base = manifest.parent_path();
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::filesystem::path p(line);
    out.push_back((p.is_absolute() || base.empty() ? p : base / p).string());
  }
  return out;
}

enum class CorpusMode { Lex, Import };

/// Lexes (or imports) every file. Files that fail to lex or import are
/// skipped and reported; unreadable files raise IoError.
inline CorpusBuild build_corpus(const std::vector<std::string>& paths,
                                CorpusMode mode,
                                const KeywordTables& tables = KeywordTables::builtin(),
                                unsigned threads = 1) {
  for (const auto& p : paths) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(p, ec)) {
      throw IoError("cannot read " + p);
    }
  }

  std::vector<std::optional<LexedDocument>> docs(paths.size());
  std::vector<std::string> errors(paths.size());
  std::vector<std::string> io_errors(paths.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < paths.size(); i = next++) {
      std::string text;
      try {
        text = read_file(paths[i]);
      } catch (const IoError& e) {
        io_errors[i] = e.what();
        continue;
      }
      try {
        docs[i] = mode == CorpusMode::Lex ? lex(text, tables)
                                          : import_token_stream(text);
      } catch (const Error& e) {
        errors[i] = e.what();
      }
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(paths.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  CorpusBuild result;
  result.corpus.origin = mode == CorpusMode::Lex ? CorpusOrigin::LexedFromSource
                                                 : CorpusOrigin::ImportedStream;
  std::map<std::string, bool> seen;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (!io_errors[i].empty()) throw IoError(io_errors[i]);
    if (!seen.emplace(paths[i], true).second) {
      result.skipped.push_back({paths[i], "duplicate path"});
    } else if (!docs[i]) {
      result.skipped.push_back({paths[i], errors[i]});
    } else if (docs[i]->empty()) {
      result.skipped.push_back({paths[i], "no tokens"});
    } else {
      result.corpus.documents.push_back({paths[i], std::move(*docs[i])});
    }
  }
  if (result.corpus.documents.empty()) {
    throw EmptyCorpus("no document survived corpus building");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct CorpusSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
  std::array<double, 3> ratios{};
};

/// Sizes for `n` items under `ratios`, by largest-remainder rounding. Ties in
/// the remainder go to the earlier part.
inline std::array<std::size_t, 3> split_sizes(std::size_t n,
                                              const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double quota = ratios[i] * static_cast<double>(n);
    // Guard against 0.1 * 10 == 0.9999999999.
    const double fl = std::floor(quota + 1e-9);
    sizes[i] = static_cast<std::size_t>(fl);
    rem[i] = quota - fl;
    assigned += sizes[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) {
    ++sizes[order[k % 3]];
  }
  return sizes;
}

inline CorpusSplit split_corpus(const Corpus& corpus,
                                const std::array<double, 3>& ratios,
                                std::uint64_t seed) {
  double sum = 0;
  for (double r : ratios) {
    if (!(r >= 0)) throw std::invalid_argument("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must sum to 1");
  }

  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corpus.documents[a].path < corpus.documents[b].path;
  });
  Rng rng(seed);
  shuffle(order, rng);

  const auto sizes = split_sizes(order.size(), ratios);
  static constexpr const char* kNames[] = {"train", "validation", "test"};
  for (int i = 0; i < 3; ++i) {
    if (ratios[i] > 0 && sizes[i] == 0) {
      throw DegenerateSplit(std::string(kNames[i]) + " part would be empty");
    }
  }
  CorpusSplit split;
  split.seed = seed;
  split.ratios = ratios;
  auto it = order.begin();
  split.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
  it += static_cast<std::ptrdiff_t>(sizes[0]);
  split.validation.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
  it += static_cast<std::ptrdiff_t>(sizes[1]);
  split.test.assign(it, order.end());
  return split;
}

inline std::string format_split(const CorpusSplit& split, const Corpus& corpus) {
  std::ostringstream out;
  out << "split v1\n";
  auto part = [&](const char* name, const std::vector<std::size_t>& idx) {
    for (std::size_t i : idx) out << name << ' ' << corpus.documents[i].path << '\n';
  };
  part("train", split.train);
  part("val", split.validation);
  part("test", split.test);
  return out.str();
}

/// Parses a split record against `corpus`; every path must name a document.
inline CorpusSplit parse_split(std::string_view text, const Corpus& corpus) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.size(); ++i) index.emplace(corpus.documents[i].path, i);

  CorpusSplit split;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  std::vector<bool> used(corpus.size(), false);
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "split v1") throw FormatError("missing header 'split v1'", 1);
      continue;
    }
    if (line.empty() || line.front() == '#') continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw FormatError("expected '<part> <path>'", line_no);
    const std::string part = line.substr(0, sp);
    const std::string path = line.substr(sp + 1);
    const auto found = index.find(path);
    if (found == index.end()) throw FormatError("path not in corpus: " + path, line_no);
    if (used[found->second]) throw FormatError("path listed twice: " + path, line_no);
    used[found->second] = true;
    if (part == "train") {
      split.train.push_back(found->second);
    } else if (part == "val") {
      split.validation.push_back(found->second);
    } else if (part == "test") {
      split.test.push_back(found->second);
    } else {
      throw FormatError("unknown part '" + part + "'", line_no);
    }
  }
  if (line_no == 0) throw FormatError("missing header 'split v1'", 1);
  const double n = static_cast<double>(corpus.size());
  split.ratios = {split.train.size() / n, split.validation.size() / n,
                  split.test.size() / n};
  return split;
}

// ---------------------------------------------------------------------------
// Vocabularies
// ---------------------------------------------------------------------------

/// Token vocabulary. Id 0 is UNK; the rest are ordered by descending training
/// frequency, then lexeme.
class Vocabulary {
 public:
  static constexpr std::uint32_t kUnk = 0;
  static constexpr std::string_view kUnkText = "<unk>";

  Vocabulary() : lexemes_{std::string(kUnkText)}, counts_{0} {}

  /// `entries` excludes UNK and must already be in id order.
  Vocabulary(std::vector<std::pair<std::string, std::uint64_t>> entries,
             std::uint64_t unk_count, int min_count)
      : min_count_(min_count) {
    lexemes_.emplace_back(kUnkText);
    counts_.push_back(unk_count);
    for (auto& [lexeme, count] : entries) {
      index_.emplace(lexeme, static_cast<std::uint32_t>(lexemes_.size()));
      lexemes_.push_back(std::move(lexeme));
      counts_.push_back(count);
    }
  }

  std::uint32_t id(std::string_view lexeme) const {
    const auto it = index_.find(std::string(lexeme));
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(std::string_view lexeme) const { return id(lexeme) != kUnk; }
  const std::string& lexeme(std::uint32_t id) const { return lexemes_.at(id); }
  std::uint64_t count(std::uint32_t id) const { return counts_.at(id); }
  std::size_t size() const { return lexemes_.size(); }
  int min_count() const { return min_count_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.lexemes_ == b.lexemes_ && a.counts_ == b.counts_ &&
           a.min_count_ == b.min_count_;
  }

 private:
  std::vector<std::string> lexemes_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, std::uint32_t> index_;
  int min_count_ = 1;
};

/// Closed set of spacing classes seen in training. Ids follow descending
/// frequency, so the fallback (most frequent) class is id 0.
class LabelVocabulary {
 public:
  LabelVocabulary() = default;

  /// `entries` must already be in id order.
  explicit LabelVocabulary(std::vector<std::pair<SpacingClass, std::uint64_t>> entries) {
    for (auto& [cls, count] : entries) {
      index_.emplace(cls, static_cast<std::uint32_t>(classes_.size()));
      classes_.push_back(cls);
      counts_.push_back(count);
    }
  }

  std::optional<std::uint32_t> find(SpacingClass c) const {
    const auto it = index_.find(c);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::uint32_t id_or_fallback(SpacingClass c) const {
    return find(c).value_or(fallback_id());
  }
  std::uint32_t fallback_id() const { return 0; }
  SpacingClass cls(std::uint32_t id) const { return classes_.at(id); }
  std::uint64_t count(std::uint32_t id) const { return counts_.at(id); }
  std::size_t size() const { return classes_.size(); }

  friend bool operator==(const LabelVocabulary& a, const LabelVocabulary& b) {
    return a.classes_ == b.classes_ && a.counts_ == b.counts_;
  }

 private:
  std::vector<SpacingClass> classes_;
  std::vector<std::uint64_t> counts_;
  std::map<SpacingClass, std::uint32_t> index_;
};

inline Vocabulary build_vocab(const std::vector<const LexedDocument*>& train,
                              int min_count = 2) {
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  std::unordered_map<std::string, std::uint64_t> freq;
  for (const auto* doc : train) {
    for (const auto& item : doc->items) ++freq[item.token.text];
  }
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  std::uint64_t unk = 0;
  for (auto& [lexeme, count] : freq) {
    if (count >= static_cast<std::uint64_t>(min_count)) {
      kept.emplace_back(lexeme, count);
    } else {
      unk += count;
    }
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return Vocabulary(std::move(kept), unk, min_count);
}

inline LabelVocabulary build_label_vocab(const std::vector<const LexedDocument*>& train) {
  std::map<SpacingClass, std::uint64_t> freq;
  for (const auto* doc : train) {
    for (const auto& item : doc->items) ++freq[item.label.cls()];
  }
  std::vector<std::pair<SpacingClass, std::uint64_t>> entries(freq.begin(), freq.end());
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return LabelVocabulary(std::move(entries));
}

inline std::string format_vocab(const Vocabulary& vocab) {
  std::ostringstream out;
  out << "vocab v1\n";
  for (std::uint32_t id = 0; id < vocab.size(); ++id) {
    out << id << ' ' << vocab.count(id) << ' ' << escape_field(vocab.lexeme(id)) << '\n';
  }
  return out.str();
}

inline Vocabulary parse_vocab(std::string_view text, int min_count = 1) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  std::vector<std::pair<std::string, std::uint64_t>> entries;
  std::uint64_t unk = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != "vocab v1") throw FormatError("missing header 'vocab v1'", 1);
      continue;
    }
    if (line.empty()) continue;
    const auto fields = detail::split_spaces(line);
    if (fields.size() != 3) throw FormatError("expected '<id> <count> <lexeme>'", line_no);
    const auto id = detail::parse_int(fields[0], line_no, "id");
    const auto count = detail::parse_int(fields[1], line_no, "count");
    if (count < 0) throw FormatError("negative count", line_no);
    if (id != static_cast<long long>(entries.size()) + 1 && id != 0) {
      throw FormatError("ids must be dense and ascending", line_no);
    }
    if (id == 0) {
      if (!entries.empty()) throw FormatError("UNK must come first", line_no);
      unk = static_cast<std::uint64_t>(count);
    } else {
      entries.emplace_back(unescape_field(fields[2], line_no),
                           static_cast<std::uint64_t>(count));
    }
  }
  if (line_no == 0) throw FormatError("missing header 'vocab v1'", 1);
  return Vocabulary(std::move(entries), unk, min_count);
}

// ---------------------------------------------------------------------------
// Encoding into the interleaved id stream
// ---------------------------------------------------------------------------

/// Joint id alphabet: label ids first, then token ids, then the begin- and
/// end-of-document markers.
struct IdSpace {
  std::uint32_t labels = 0;
  std::uint32_t tokens = 0;

  std::uint32_t label(std::uint32_t label_id) const { return label_id; }
  std::uint32_t token(std::uint32_t token_id) const { return labels + token_id; }
  std::uint32_t bod() const { return labels + tokens; }
  std::uint32_t eod() const { return labels + tokens + 1; }
  std::uint32_t size() const { return labels + tokens + 2; }
  bool is_label(std::uint32_t id) const { return id < labels; }
  bool is_token(std::uint32_t id) const { return id >= labels && id < labels + tokens; }

  friend bool operator==(const IdSpace&, const IdSpace&) = default;
};

inline IdSpace id_space(const Vocabulary& vocab, const LabelVocabulary& labels) {
  return {static_cast<std::uint32_t>(labels.size()),
          static_cast<std::uint32_t>(vocab.size())};
}

/// FNV-1a over the vocabulary contents; encoded documents carry it so that
/// predictors can reject documents encoded against other vocabularies.
inline std::uint64_t vocab_fingerprint(const Vocabulary& vocab,
                                       const LabelVocabulary& labels) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::string_view bytes) {
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  };
  for (std::uint32_t i = 0; i < vocab.size(); ++i) mix(vocab.lexeme(i));
  for (std::uint32_t i = 0; i < labels.size(); ++i) {
    mix(to_string(labels.cls(i)));
  }
  return h;
}

/// Interleaved stream s_0 t_0 s_1 t_1 ... in the joint id space.
struct EncodedDocument {
  std::vector<std::uint32_t> stream;
  std::vector<bool> label_oov;  // per slot: true class was not in the label vocab
  IdSpace space;
  std::uint64_t fingerprint = 0;

  std::size_t slots() const { return stream.size() / 2; }
  std::uint32_t label_id(std::size_t slot) const { return stream[2 * slot]; }
  std::uint32_t token_id(std::size_t slot) const {
    return stream[2 * slot + 1] - space.labels;
  }

  friend bool operator==(const EncodedDocument&, const EncodedDocument&) = default;
};

inline EncodedDocument encode(const LexedDocument& doc, const Vocabulary& vocab,
                              const LabelVocabulary& labels) {
  EncodedDocument out;
  out.space = id_space(vocab, labels);
  out.fingerprint = vocab_fingerprint(vocab, labels);
  out.stream.reserve(2 * doc.size());
  out.label_oov.reserve(doc.size());
  for (const auto& item : doc.items) {
    const auto found = labels.find(item.label.cls());
    out.label_oov.push_back(!found.has_value());
    out.stream.push_back(out.space.label(found.value_or(labels.fallback_id())));
    out.stream.push_back(out.space.token(vocab.id(item.token.text)));
  }
  return out;
}

struct DecodedItem {
  SpacingClass label;
  std::string token;

  friend bool operator==(const DecodedItem&, const DecodedItem&) = default;
};

inline std::vector<DecodedItem> decode(const EncodedDocument& doc,
                                       const Vocabulary& vocab,
                                       const LabelVocabulary& labels) {
  std::vector<DecodedItem> out;
  out.reserve(doc.slots());
  for (std::size_t i = 0; i < doc.slots(); ++i) {
    out.push_back({labels.cls(doc.label_id(i)), vocab.lexeme(doc.token_id(i))});
  }
  return out;
}

}  // namespace spacefmt
