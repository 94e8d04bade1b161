#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "spacefmt/corpus.hpp"
#include "spacefmt/lexer.hpp"
#include "spacefmt/predictor.hpp"

namespace spacefmt {

enum class SlotPosition { InSentence, BetweenSentence };

struct SlotCategory {
  SlotPosition position = SlotPosition::InSentence;
  std::optional<TokenKind> left_kind;  // absent at document start
  TokenKind right_kind = TokenKind::Other;
  bool qed = false;  // the following token is a sentence-initial "Qed"

  friend bool operator==(const SlotCategory&, const SlotCategory&) = default;
};

inline SlotCategory categorize(const LexedDocument& doc, std::size_t slot) {
  SlotCategory c;
  c.right_kind = doc.items.at(slot).token.kind;
  if (slot == 0) {
    c.position = SlotPosition::BetweenSentence;
  } else {
    c.left_kind = doc.items[slot - 1].token.kind;
    c.position = std::binary_search(doc.sentence_ends.begin(), doc.sentence_ends.end(), slot - 1)
                     ? SlotPosition::BetweenSentence
                     : SlotPosition::InSentence;
  }
  if (doc.items[slot].token.text == "Qed") {
    // Sentence-initial: only comments separate it from the previous sentence end.
    std::size_t j = slot;
    while (j > 0 && doc.items[j - 1].token.kind == TokenKind::Comment &&
           !std::binary_search(doc.sentence_ends.begin(), doc.sentence_ends.end(), j - 1)) {
      --j;
    }
    c.qed = j == 0 ||
            std::binary_search(doc.sentence_ends.begin(), doc.sentence_ends.end(), j - 1);
  }
  return c;
}

/// The k values tracked per category.
inline constexpr std::array<std::size_t, 4> kTopK = {1, 2, 3, 5};

struct Tally {
  std::uint64_t total = 0;
  std::array<std::uint64_t, kTopK.size()> correct{};  // indexed like kTopK

  std::uint64_t top(std::size_t k) const {
    for (std::size_t i = 0; i < kTopK.size(); ++i) {
      if (kTopK[i] == k) return correct[i];
    }
    throw std::out_of_range("untracked k");
  }

  Tally& operator+=(const Tally& o) {
    total += o.total;
    for (std::size_t i = 0; i < correct.size(); ++i) correct[i] += o.correct[i];
    return *this;
  }

  friend bool operator==(const Tally&, const Tally&) = default;
};

/// Per-category tallies. Keys: "all", "insent", "betsent", left-kind
/// aggregates "G"/"L"/"V", kind pairs such as "G-L" (left kind G, L or V;
/// right kind any), and "qed-newline".
struct EvalReport {
  std::string predictor;
  std::string split;
  std::map<std::string, Tally> categories;

  /// Flat metric map: accuracy-/correct-/count-<category>, with the "all"
  /// tally also reported as top-2, top-3 and top-5. Empty categories are
  /// omitted.
  std::map<std::string, double> metrics() const {
    std::map<std::string, double> out;
    auto put = [&out](const std::string& key, std::uint64_t correct, std::uint64_t total) {
      out["accuracy-" + key] = static_cast<double>(correct) / static_cast<double>(total);
      out["correct-" + key] = static_cast<double>(correct);
      out["count-" + key] = static_cast<double>(total);
    };
    for (const auto& [key, tally] : categories) {
      if (tally.total == 0) continue;
      put(key, tally.correct[0], tally.total);
      if (key == "all") {
        for (std::size_t i = 1; i < kTopK.size(); ++i) {
          put("top-" + std::to_string(kTopK[i]), tally.correct[i], tally.total);
        }
      }
    }
    return out;
  }

  std::optional<double> accuracy(const std::string& category, std::size_t k = 1) const {
    const auto it = categories.find(category);
    if (it == categories.end() || it->second.total == 0) return std::nullopt;
    return static_cast<double>(it->second.top(k)) / static_cast<double>(it->second.total);
  }

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct EvalDocument {
  const LexedDocument* lexed;
  EncodedDocument encoded;
};

inline std::vector<EvalDocument> prepare_eval(const SpacingPredictor& predictor,
                                              std::span<const LexedDocument* const> docs) {
  std::vector<EvalDocument> out;
  out.reserve(docs.size());
  for (const auto* d : docs) out.push_back({d, predictor.encode(*d)});
  return out;
}

namespace detail {

inline const char* aggregate_key(TokenKind k) {
  switch (k) {
    case TokenKind::Gallina: return "G";
    case TokenKind::Ltac: return "L";
    case TokenKind::Vernacular: return "V";
    default: return nullptr;
  }
}

inline std::vector<std::string> category_keys(const SlotCategory& c) {
  std::vector<std::string> keys{"all"};
  keys.emplace_back(c.position == SlotPosition::InSentence ? "insent" : "betsent");
  if (c.left_kind) {
    if (const char* agg = aggregate_key(*c.left_kind)) {
      keys.emplace_back(agg);
      keys.push_back(std::string(agg) + "-" + kind_char(c.right_kind));
    }
  }
  if (c.qed) keys.emplace_back("qed-newline");
  return keys;
}

inline void tally_document(const SpacingPredictor& predictor, const EvalDocument& doc,
                           std::map<std::string, Tally>& out) {
  const auto rankings = predictor.rank_slots(doc.encoded);
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    Tally t;
    t.total = 1;
    if (!doc.encoded.label_oov[i]) {
      const std::uint32_t truth = doc.encoded.label_id(i);
      const auto& r = rankings[i];
      std::size_t rank = r.size();
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (r[j].label == truth) {
          rank = j;
          break;
        }
      }
      for (std::size_t k = 0; k < kTopK.size(); ++k) t.correct[k] = rank < kTopK[k] ? 1 : 0;
    }
    for (const auto& key : category_keys(categorize(*doc.lexed, i))) out[key] += t;
  }
}

}  // namespace detail

/// Top-k accuracy of `predictor` over every slot of `docs`, per category.
/// Slots whose true label is outside the label vocabulary are misses at every k.
inline EvalReport evaluate(const SpacingPredictor& predictor, std::span<const EvalDocument> docs,
                           std::string split = "test", unsigned threads = 1) {
  const auto fp = predictor.fingerprint();
  for (const auto& d : docs) {
    if (d.encoded.fingerprint != fp) {
      throw VocabMismatch("evaluation documents were encoded for a different predictor");
    }
  }
  EvalReport report;
  report.predictor = predictor.name();
  report.split = std::move(split);
  report.categories["all"];
  report.categories["insent"];
  report.categories["betsent"];

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(docs.size())));
  std::vector<std::map<std::string, Tally>> shards(threads);
  auto work = [&](unsigned shard) {
    for (std::size_t i = shard; i < docs.size(); i += threads) {
      detail::tally_document(predictor, docs[i], shards[shard]);
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned s = 0; s < threads; ++s) pool.emplace_back(work, s);
  }
  for (const auto& shard : shards) {
    for (const auto& [key, tally] : shard) report.categories[key] += tally;
  }
  return report;
}

enum class ReportStyle { HumanTable, FlatMetrics };

inline std::string format_percent(std::optional<double> v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * *v);
  return buf;
}

inline std::string render_report(std::span<const EvalReport> reports, ReportStyle style) {
  std::ostringstream out;
  if (style == ReportStyle::HumanTable) {
    std::size_t width = 0;
    for (const auto& r : reports) width = std::max(width, r.predictor.size());
    auto cell = [](const std::string& s) {
      return std::string(s.size() < 5 ? 5 - s.size() : 0, ' ') + s;
    };
    out << std::string("Model") + std::string(width > 5 ? width - 5 : 0, ' ') << "  "
        << "Top-1" << "  " << "Top-3" << '\n';
    for (const auto& r : reports) {
      out << r.predictor << std::string(width - r.predictor.size(), ' ') << "  "
          << cell(format_percent(r.accuracy("all", 1))) << "  "
          << cell(format_percent(r.accuracy("all", 3))) << '\n';
    }
    return out.str();
  }
  std::vector<std::pair<std::string, std::string>> lines;
  for (const auto& r : reports) {
    for (const auto& [key, value] : r.metrics()) {
      char buf[64];
      if (key.starts_with("accuracy-")) {
        std::snprintf(buf, sizeof buf, "%.6f", value);
      } else {
        std::snprintf(buf, sizeof buf, "%.0f", value);
      }
      lines.emplace_back(r.predictor + "-" + r.split + "-" + key, buf);
    }
  }
  std::sort(lines.begin(), lines.end());
  for (const auto& [key, value] : lines) out << key << ' ' << value << '\n';
  return out.str();
}

inline std::string render_report(const EvalReport& report, ReportStyle style) {
  return render_report(std::span<const EvalReport>(&report, 1), style);
}

/// Notes printed with human-readable reports: the G/L/V aggregates and kind
/// pairs are keyed on the kinds of the tokens flanking each slot.
inline constexpr std::string_view kCategoryNotes =
    "# categories (interpretation): G/L/V = kind of the token left of the slot;\n"
    "# X-Y = left kind X, right kind Y; insent/betsent = slot inside a sentence or\n"
    "# after a sentence end; qed-newline = slot before a sentence starting with Qed.\n";

}  // namespace spacefmt
