#pragma once

#include <array>
#include <atomic>
#include <filesystem>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <unistd.h>

#include "spacefmt/spacefmt.hpp"

namespace spacefmt::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("spacefmt-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  std::string write(const std::string& name, std::string_view text) const {
    write_file(path_ / name, text);
    return file(name);
  }

 private:
  std::filesystem::path path_;
};

/// Vocabulary of `n` tokens named t0..t{n-1} (plus UNK).
inline Vocabulary numbered_vocab(std::size_t n) {
  std::vector<std::pair<std::string, std::uint64_t>> entries;
  for (std::size_t i = 0; i < n; ++i) entries.emplace_back("t" + std::to_string(i), 2);
  return Vocabulary(std::move(entries), 0, 2);
}

/// Label vocabulary of `n` distinct classes.
inline LabelVocabulary numbered_labels(std::size_t n) {
  std::vector<std::pair<SpacingClass, std::uint64_t>> entries;
  for (std::size_t i = 0; i < n; ++i) {
    entries.push_back({{static_cast<int>(i % 4), static_cast<int>(i / 4)}, n - i});
  }
  return LabelVocabulary(std::move(entries));
}

/// Uniformly random stream of `slots` (label, token) pairs.
inline EncodedDocument random_encoded(const Vocabulary& vocab, const LabelVocabulary& labels,
                                      std::size_t slots, Rng& rng) {
  EncodedDocument d;
  d.space = id_space(vocab, labels);
  d.fingerprint = vocab_fingerprint(vocab, labels);
  for (std::size_t i = 0; i < slots; ++i) {
    d.stream.push_back(d.space.label(static_cast<std::uint32_t>(uniform_index(rng, labels.size()))));
    d.stream.push_back(d.space.token(static_cast<std::uint32_t>(uniform_index(rng, vocab.size()))));
    d.label_oov.push_back(false);
  }
  return d;
}

/// Random lexable source: identifiers (ASCII and UTF-8), numerals, keywords,
/// operators, punctuation, nested comments, strings with doubled quotes, and
/// whitespace runs mixing every blank character.
inline std::string random_source(Rng& rng, std::size_t pieces) {
  static constexpr std::array<std::string_view, 22> kWords = {
      "Lemma", "Proof", "Qed", "move", "rewrite", "forall", "fun", "x", "y'", "_h",
      "Nat.add", "αβ", "∀", "→", "Definition", "match", "with", "end", "apply", "by",
      "Record", "intros"};
  static constexpr std::array<std::string_view, 24> kSymbols = {
      "=>", "->", "<-", ":=", "::", "==", "<=", ">=", "<>", "||", "&&", ".",
      ":", ";", "(", ")", "[", "]", "|", "-", "+", "*", "/", "{"};
  static constexpr std::array<char, 6> kBlanks = {' ', '\t', '\n', '\r', '\f', '\v'};
  auto blanks = [&] {
    std::string s;
    const auto n = uniform_index(rng, 4);
    for (std::uint64_t i = 0; i < n; ++i) {
      s += uniform_index(rng, 3) == 0 ? kBlanks[uniform_index(rng, kBlanks.size())] : ' ';
    }
    return s;
  };
  std::function<std::string(int)> comment = [&](int depth) {
    std::string s = "(*";
    const auto n = uniform_index(rng, 4);
    for (std::uint64_t i = 0; i < n; ++i) {
      if (depth < 2 && uniform_index(rng, 3) == 0) {
        s += comment(depth + 1);
      } else {
        s += std::string(kWords[uniform_index(rng, kWords.size())]) + blanks() + " ";
      }
    }
    return s + "*)";
  };
  std::string out = blanks();
  for (std::size_t i = 0; i < pieces; ++i) {
    switch (uniform_index(rng, 8)) {
      case 0: case 1: case 2:
        out += kWords[uniform_index(rng, kWords.size())];
        break;
      case 3: case 4: {
        const auto sym = kSymbols[uniform_index(rng, kSymbols.size())];
        // "(" directly followed by "*" would open a comment.
        if (sym.front() == '*' && !out.empty() && out.back() == '(') out += ' ';
        out += sym;
        break;
      }
      case 5:
        out += std::to_string(uniform_index(rng, 1000));
        break;
      case 6:
        out += comment(0);
        break;
      default:
        out += uniform_index(rng, 2) ? "\"a \"\"q\"\" b\"" : "\"\"";
        break;
    }
    out += blanks();
  }
  return out;
}

}  // namespace spacefmt::testing
