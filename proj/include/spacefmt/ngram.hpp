#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "spacefmt/binary_io.hpp"
#include "spacefmt/corpus.hpp"
#include "spacefmt/errors.hpp"

namespace spacefmt {

struct RankedLabel {
  std::uint32_t label;  // label-vocabulary id
  double score;

  friend bool operator==(const RankedLabel&, const RankedLabel&) = default;
};

using Ranking = std::vector<RankedLabel>;

/// Sorts by descending score, ties by ascending label id.
inline void sort_ranking(Ranking& r) {
  std::sort(r.begin(), r.end(), [](const RankedLabel& a, const RankedLabel& b) {
    return a.score != b.score ? a.score > b.score : a.label < b.label;
  });
}

struct NgramOptions {
  int order = 4;
  double backoff = 0.4;
};

/// Order-n model over the interleaved label/token stream with stupid backoff.
///
/// Every document is padded with n-1 begin-of-document markers and one
/// end-of-document marker; k-grams are counted over every window of the padded
/// stream for k = 1..n, so each k-gram's prefix and suffix counts dominate it.
class NgramModel {
 public:
  static constexpr std::string_view kMagic = "SFNG";
  static constexpr std::uint16_t kVersion = 1;

  using Gram = std::u32string;

  NgramModel() = default;

  static NgramModel train(std::span<const EncodedDocument> docs,
                          const Vocabulary& vocab, const LabelVocabulary& labels,
                          NgramOptions options = {}) {
    if (options.order < 2) throw std::invalid_argument("n-gram order must be >= 2");
    if (!(options.backoff > 0 && options.backoff <= 1)) {
      throw std::invalid_argument("backoff factor must be in (0, 1]");
    }
    NgramModel m;
    m.order_ = options.order;
    m.backoff_ = options.backoff;
    m.vocab_ = vocab;
    m.labels_ = labels;
    m.space_ = id_space(vocab, labels);
    m.tables_.resize(static_cast<std::size_t>(m.order_));
    const auto fp = vocab_fingerprint(vocab, labels);
    for (const auto& doc : docs) {
      if (doc.fingerprint != fp) {
        throw VocabMismatch("training document encoded with another vocabulary");
      }
      const Gram padded = m.pad(doc.stream);
      for (std::size_t k = 1; k <= static_cast<std::size_t>(m.order_); ++k) {
        auto& table = m.tables_[k - 1];
        for (std::size_t i = 0; i + k <= padded.size(); ++i) {
          ++table[padded.substr(i, k)];
        }
      }
    }
    for (const auto& [gram, c] : m.tables_[0]) m.total_ += c;
    return m;
  }

  int order() const { return order_; }
  double backoff() const { return backoff_; }
  const Vocabulary& vocab() const { return vocab_; }
  const LabelVocabulary& labels() const { return labels_; }
  const IdSpace& space() const { return space_; }
  std::uint64_t total() const { return total_; }

  std::uint64_t count(std::u32string_view gram) const {
    if (gram.empty() || gram.size() > tables_.size()) return 0;
    const auto& table = tables_[gram.size() - 1];
    const auto it = table.find(Gram(gram));
    return it == table.end() ? 0 : it->second;
  }

  std::uint64_t count(std::span<const std::uint32_t> gram) const {
    return count(std::u32string_view(to_gram(gram)));
  }

  /// Stupid-backoff score of `item` after `context` (truncated to n-1 ids).
  double score(std::span<const std::uint32_t> context, std::uint32_t item) const {
    const Gram ctx = to_gram(context.size() > static_cast<std::size_t>(order_ - 1)
                                 ? context.last(static_cast<std::size_t>(order_ - 1))
                                 : context);
    return score_gram(ctx, item);
  }

  /// Ranks every label id for the slot following `left_context`, an unpadded
  /// prefix of an encoded stream that ends on a token (or is empty).
  Ranking predict_spacing(std::span<const std::uint32_t> left_context) const {
    if (left_context.size() % 2 != 0) {
      throw ParityError("next stream position is a token slot");
    }
    return rank(context_for(left_context));
  }

  /// Ranking for an already padded, truncated context of length n-1.
  Ranking rank(std::u32string_view context) const {
    Ranking out;
    out.reserve(space_.labels);
    for (std::uint32_t l = 0; l < space_.labels; ++l) {
      out.push_back({l, score_gram(context, space_.label(l))});
    }
    sort_ranking(out);
    return out;
  }

  /// Last n-1 ids of the padded stream before the slot.
  Gram context_for(std::span<const std::uint32_t> prefix) const {
    const auto want = static_cast<std::size_t>(order_ - 1);
    Gram ctx;
    const std::size_t take = std::min(want, prefix.size());
    ctx.append(want - take, static_cast<char32_t>(space_.bod()));
    for (std::size_t i = prefix.size() - take; i < prefix.size(); ++i) {
      ctx.push_back(static_cast<char32_t>(prefix[i]));
    }
    return ctx;
  }

  std::string serialize() const {
    binary::Writer w;
    w.bytes(kMagic);
    w.uint(kVersion);
    w.uint(static_cast<std::uint32_t>(order_));
    w.f64(backoff_);
    binary::write_vocabularies(w, vocab_, labels_);
    for (std::size_t k = 1; k <= tables_.size(); ++k) {
      std::vector<std::pair<Gram, std::uint64_t>> entries(tables_[k - 1].begin(),
                                                          tables_[k - 1].end());
      std::sort(entries.begin(), entries.end());
      w.uint(static_cast<std::uint64_t>(entries.size()));
      for (const auto& [gram, c] : entries) {
        for (char32_t id : gram) w.uint(static_cast<std::uint32_t>(id));
        w.uint(c);
      }
    }
    return w.data();
  }

  static NgramModel deserialize(std::string_view data) {
    binary::Reader r(data);
    binary::expect_magic(r, kMagic, kVersion);
    NgramModel m;
    m.order_ = static_cast<int>(r.uint<std::uint32_t>());
    if (m.order_ < 2 || m.order_ > 64) throw ModelIoError("corrupt model file: bad order");
    m.backoff_ = r.f64();
    if (!(m.backoff_ > 0 && m.backoff_ <= 1)) {
      throw ModelIoError("corrupt model file: bad backoff factor");
    }
    binary::read_vocabularies(r, m.vocab_, m.labels_);
    m.space_ = id_space(m.vocab_, m.labels_);
    m.tables_.resize(static_cast<std::size_t>(m.order_));
    for (std::size_t k = 1; k <= m.tables_.size(); ++k) {
      const auto n = r.count(r.uint<std::uint64_t>(), 4 * k + 8);
      auto& table = m.tables_[k - 1];
      table.reserve(n);
      for (std::size_t e = 0; e < n; ++e) {
        Gram gram;
        for (std::size_t j = 0; j < k; ++j) {
          const auto id = r.uint<std::uint32_t>();
          if (id >= m.space_.size()) throw ModelIoError("corrupt model file: id out of range");
          gram.push_back(static_cast<char32_t>(id));
        }
        const auto c = r.uint<std::uint64_t>();
        if (c == 0 || !table.emplace(std::move(gram), c).second) {
          throw ModelIoError("corrupt model file: bad count table");
        }
      }
    }
    if (!r.done()) throw ModelIoError("corrupt model file: trailing bytes");
    for (const auto& [gram, c] : m.tables_[0]) m.total_ += c;
    return m;
  }

  void save(const std::filesystem::path& path) const { write_file(path, serialize()); }

  static NgramModel load(const std::filesystem::path& path) {
    std::string data;
    try {
      data = read_file(path);
    } catch (const IoError& e) {
      throw ModelIoError(e.what());
    }
    return deserialize(data);
  }

  /// Unpadded stream -> padded gram string.
  Gram pad(std::span<const std::uint32_t> stream) const {
    Gram g(static_cast<std::size_t>(order_ - 1), static_cast<char32_t>(space_.bod()));
    for (auto id : stream) g.push_back(static_cast<char32_t>(id));
    g.push_back(static_cast<char32_t>(space_.eod()));
    return g;
  }

 private:
  static Gram to_gram(std::span<const std::uint32_t> ids) {
    Gram g;
    g.reserve(ids.size());
    for (auto id : ids) g.push_back(static_cast<char32_t>(id));
    return g;
  }

  double score_gram(std::u32string_view context, std::uint32_t item) const {
    double scale = 1.0;
    Gram gram(context);
    gram.push_back(static_cast<char32_t>(item));
    for (std::size_t start = 0; start < context.size(); ++start) {
      const std::u32string_view full = std::u32string_view(gram).substr(start);
      const std::uint64_t c = count(full);
      if (c > 0) {
        return scale * static_cast<double>(c) /
               static_cast<double>(count(full.substr(0, full.size() - 1)));
      }
      scale *= backoff_;
    }
    const double unigram = static_cast<double>(count(std::u32string_view(gram).substr(context.size())));
    return scale * (unigram + 1.0) / (static_cast<double>(total_) + space_.size());
  }

  int order_ = 2;
  double backoff_ = 0.4;
  Vocabulary vocab_;
  LabelVocabulary labels_;
  IdSpace space_;
  std::vector<std::unordered_map<Gram, std::uint64_t>> tables_;
  std::uint64_t total_ = 0;
};

}  // namespace spacefmt
