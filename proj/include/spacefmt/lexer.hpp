#pragma once

#include <algorithm>
#include <charconv>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "spacefmt/errors.hpp"
#include "spacefmt/keywords.hpp"

namespace spacefmt {

enum class TokenKind : std::uint8_t { Gallina, Ltac, Vernacular, Comment, Other };

enum class TokenPosition { SentenceInitial, Other };

inline char kind_char(TokenKind kind) {
  switch (kind) {
    case TokenKind::Gallina: return 'G';
    case TokenKind::Ltac: return 'L';
    case TokenKind::Vernacular: return 'V';
    case TokenKind::Comment: return 'C';
    case TokenKind::Other: return 'O';
  }
  return 'O';
}

inline std::optional<TokenKind> kind_from_char(char c) {
  switch (c) {
    case 'G': return TokenKind::Gallina;
    case 'L': return TokenKind::Ltac;
    case 'V': return TokenKind::Vernacular;
    case 'C': return TokenKind::Comment;
    case 'O': return TokenKind::Other;
    default: return std::nullopt;
  }
}

struct Token {
  std::string text;
  TokenKind kind = TokenKind::Other;
  int line = 1;  // 1-based
  int col = 0;   // 0-based byte column

  friend bool operator==(const Token&, const Token&) = default;
};

/// The quantized part of a spacing label; the unit of prediction.
struct SpacingClass {
  int newlines = 0;
  int horizontal = 0;

  friend auto operator<=>(const SpacingClass&, const SpacingClass&) = default;
};

inline std::string to_string(SpacingClass c) {
  return "(" + std::to_string(c.newlines) + "," + std::to_string(c.horizontal) +
         ")";
}

/// Whitespace preceding a token. `horizontal` is the run length when there is
/// no newline, otherwise the indentation column of the following token.
struct SpacingLabel {
  static constexpr int kMaxNewlines = 3;
  static constexpr int kMaxHorizontal = 40;

  int newlines = 0;
  int horizontal = 0;
  std::optional<std::string> raw;

  SpacingClass cls() const { return {newlines, horizontal}; }

  /// Label with the given class and no raw text; values are clamped.
  static SpacingLabel synthesized(SpacingClass c) {
    return {std::clamp(c.newlines, 0, kMaxNewlines),
            std::clamp(c.horizontal, 0, kMaxHorizontal), std::nullopt};
  }

  /// Quantizes a whitespace run. Tabs and other blanks count as one unit.
  static SpacingLabel quantize(std::string_view ws) {
    int nl = 0;
    std::size_t after = 0;
    for (std::size_t i = 0; i < ws.size(); ++i) {
      if (ws[i] == '\n') {
        ++nl;
        after = i + 1;
      }
    }
    const auto h = static_cast<int>(ws.size() - after);
    return {std::min(nl, kMaxNewlines), std::min(h, kMaxHorizontal),
            std::string(ws)};
  }

  friend bool operator==(const SpacingLabel&, const SpacingLabel&) = default;
};

struct LexedItem {
  SpacingLabel label;
  Token token;

  friend bool operator==(const LexedItem&, const LexedItem&) = default;
};

/// Alternating stream of spacing labels and tokens. `trailing` holds the
/// whitespace after the last token (or the whole input when it has no token).
struct LexedDocument {
  std::vector<LexedItem> items;
  std::vector<std::size_t> sentence_ends;
  SpacingLabel trailing{0, 0, std::string()};

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }

  friend bool operator==(const LexedDocument&, const LexedDocument&) = default;
};

inline bool is_blank(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

inline TokenKind classify_token(
    std::string_view lexeme, TokenPosition position,
    const KeywordTables& tables = KeywordTables::builtin()) {
  if (lexeme.size() >= 4 && lexeme.starts_with("(*")) return TokenKind::Comment;
  if (position == TokenPosition::SentenceInitial &&
      tables.vernacular.contains(lexeme)) {
    return TokenKind::Vernacular;
  }
  if (tables.ltac.contains(lexeme)) return TokenKind::Ltac;
  if (tables.gallina.contains(lexeme)) return TokenKind::Gallina;
  if (tables.vernacular.contains(lexeme)) return TokenKind::Vernacular;
  return TokenKind::Other;
}

namespace detail {

inline bool ident_start(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' ||
         c >= 0x80;
}

inline bool ident_continue(unsigned char c) {
  return ident_start(c) || (c >= '0' && c <= '9') || c == '\'';
}

inline bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

inline constexpr std::string_view kOperators[] = {
    "=>", "->", "<-", ":=", "::", "==", "<=", ">=", "<>", "||", "&&"};

/// Length of the lexeme starting at `pos`, or throws on an unterminated
/// comment or string literal.
inline std::size_t scan_token(std::string_view src, std::size_t pos, int line,
                              int col) {
  const std::size_t n = src.size();
  const auto c = static_cast<unsigned char>(src[pos]);
  if (src.substr(pos, 2) == "(*") {
    int depth = 1;
    std::size_t i = pos + 2;
    while (depth > 0) {
      if (i >= n) throw LexError("unterminated comment", line, col);
      if (src.substr(i, 2) == "(*") {
        ++depth;
        i += 2;
      } else if (src.substr(i, 2) == "*)") {
        --depth;
        i += 2;
      } else {
        ++i;
      }
    }
    return i - pos;
  }
  if (c == '"') {
    std::size_t i = pos + 1;
    for (;;) {
      if (i >= n) throw LexError("unterminated string literal", line, col);
      if (src[i] == '"') {
        if (i + 1 < n && src[i + 1] == '"') {
          i += 2;
          continue;
        }
        return i + 1 - pos;
      }
      ++i;
    }
  }
  if (ident_start(c)) {
    std::size_t i = pos + 1;
    while (i < n && ident_continue(static_cast<unsigned char>(src[i]))) ++i;
    return i - pos;
  }
  if (is_digit(c)) {
    std::size_t i = pos + 1;
    while (i < n && is_digit(static_cast<unsigned char>(src[i]))) ++i;
    return i - pos;
  }
  for (std::string_view op : kOperators) {
    if (src.substr(pos, op.size()) == op) return op.size();
  }
  return 1;
}

inline void advance_position(std::string_view text, int& line, int& col) {
  for (char ch : text) {
    if (ch == '\n') {
      ++line;
      col = 0;
    } else {
      ++col;
    }
  }
}

}  // namespace detail

/// Splits `source` into alternating spacing labels and tokens. Every byte ends
/// up either in a lexeme or in a label's raw text.
inline LexedDocument lex(std::string_view source,
                         const KeywordTables& tables = KeywordTables::builtin()) {
  LexedDocument doc;
  const std::size_t n = source.size();
  std::size_t pos = 0;
  int line = 1;
  int col = 0;
  bool sentence_initial = true;

  for (;;) {
    const std::size_t ws_begin = pos;
    while (pos < n && is_blank(source[pos])) ++pos;
    const std::string_view ws = source.substr(ws_begin, pos - ws_begin);
    detail::advance_position(ws, line, col);
    if (pos == n) {
      doc.trailing = SpacingLabel::quantize(ws);
      break;
    }

    const std::size_t len = detail::scan_token(source, pos, line, col);
    const std::string_view text = source.substr(pos, len);
    Token tok{std::string(text), TokenKind::Other, line, col};
    tok.kind = classify_token(text,
                              sentence_initial ? TokenPosition::SentenceInitial
                                               : TokenPosition::Other,
                              tables);
    detail::advance_position(text, line, col);
    pos += len;

    doc.items.push_back({SpacingLabel::quantize(ws), std::move(tok)});
    if (doc.items.back().token.kind != TokenKind::Comment) {
      sentence_initial = false;
    }
    if (text == "." && (pos == n || is_blank(source[pos]))) {
      doc.sentence_ends.push_back(doc.items.size() - 1);
      sentence_initial = true;
    }
  }

  if (!doc.items.empty() &&
      (doc.sentence_ends.empty() ||
       doc.sentence_ends.back() != doc.items.size() - 1)) {
    doc.sentence_ends.push_back(doc.items.size() - 1);
  }
  return doc;
}

/// Concatenates raw whitespace and lexemes; byte-identical to the source for
/// documents produced by lex().
inline std::string render_exact(const LexedDocument& doc) {
  std::string out;
  auto put_raw = [&out](const SpacingLabel& label, std::size_t index) {
    if (!label.raw) {
      throw MissingRaw("label " + std::to_string(index) +
                       " has no raw whitespace");
    }
    out += *label.raw;
  };
  for (std::size_t i = 0; i < doc.items.size(); ++i) {
    put_raw(doc.items[i].label, i);
    out += doc.items[i].token.text;
  }
  put_raw(doc.trailing, doc.items.size());
  return out;
}

inline void append_canonical(std::string& out, SpacingClass c) {
  out.append(static_cast<std::size_t>(c.newlines), '\n');
  out.append(static_cast<std::size_t>(c.horizontal), ' ');
}

/// Renders whitespace from the quantized classes only.
inline std::string render_canonical(const LexedDocument& doc) {
  std::string out;
  for (const auto& item : doc.items) {
    append_canonical(out, item.label.cls());
    out += item.token.text;
  }
  append_canonical(out, doc.trailing.cls());
  return out;
}

/// What whitespace the slot before item `i` must (not) contain so that the
/// rendered text re-lexes to the same tokens and sentences.
struct SlotConstraint {
  bool require_space = false;
  bool forbid_space = false;

  bool allows(SpacingClass c) const {
    const bool empty = c.newlines == 0 && c.horizontal == 0;
    return !(require_space && empty) && !(forbid_space && !empty);
  }
};

inline std::vector<SlotConstraint> slot_constraints(const LexedDocument& doc) {
  std::vector<SlotConstraint> out(doc.items.size());
  std::size_t next_end = 0;
  for (std::size_t i = 1; i < doc.items.size(); ++i) {
    const Token& left = doc.items[i - 1].token;
    const Token& right = doc.items[i].token;
    while (next_end < doc.sentence_ends.size() &&
           doc.sentence_ends[next_end] < i - 1) {
      ++next_end;
    }
    const bool left_ends_sentence = next_end < doc.sentence_ends.size() &&
                                    doc.sentence_ends[next_end] == i - 1;
    if (left.text == ".") {
      if (left_ends_sentence) {
        out[i].require_space = true;
      } else {
        out[i].forbid_space = true;
      }
      continue;
    }
    try {
      const LexedDocument glued = lex(left.text + right.text);
      out[i].require_space = glued.items.size() != 2 ||
                             glued.items[0].token.text != left.text ||
                             glued.items[1].token.text != right.text;
    } catch (const LexError&) {
      out[i].require_space = true;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Token-stream files
//
//   spacefmt-tokens v1
//   L <newlines> <horizontal>[ <raw-escaped>]
//   T <G|L|V|C|O> <line> <col> <lexeme-escaped>
//   S <index>
//
// A label line without the raw field carries no raw whitespace; with an empty
// raw field (line ends in a space) the raw whitespace is the empty string. A
// label line not followed by a token line is the trailing whitespace.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kTokenStreamHeader = "spacefmt-tokens v1";

inline std::string escape_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case ' ': out += "\\s"; break;
      case '\r': out += "\\r"; break;
      case '\f': out += "\\f"; break;
      case '\v': out += "\\v"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string unescape_field(std::string_view s, int line_no) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i == s.size()) throw FormatError("dangling backslash", line_no);
    switch (s[i]) {
      case '\\': out += '\\'; break;
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case 's': out += ' '; break;
      case 'r': out += '\r'; break;
      case 'f': out += '\f'; break;
      case 'v': out += '\v'; break;
      default:
        throw FormatError(std::string("unknown escape \\") + s[i], line_no);
    }
  }
  return out;
}

namespace detail {

inline void write_label(std::ostream& out, const SpacingLabel& label) {
  out << "L " << label.newlines << ' ' << label.horizontal;
  if (label.raw) out << ' ' << escape_field(*label.raw);
  out << '\n';
}

inline std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t sp = line.find(' ', start);
    if (sp == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, sp - start));
    start = sp + 1;
  }
}

inline long long parse_int(std::string_view field, int line_no,
                           const char* what) {
  long long v = 0;
  const auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw FormatError(std::string("bad ") + what + " '" + std::string(field) +
                          "'",
                      line_no);
  }
  return v;
}

}  // namespace detail

inline std::string export_token_stream(const LexedDocument& doc) {
  std::ostringstream out;
  out << kTokenStreamHeader << '\n';
  for (const auto& item : doc.items) {
    detail::write_label(out, item.label);
    out << "T " << kind_char(item.token.kind) << ' ' << item.token.line << ' '
        << item.token.col << ' ' << escape_field(item.token.text) << '\n';
  }
  detail::write_label(out, doc.trailing);
  for (std::size_t end : doc.sentence_ends) out << "S " << end << '\n';
  return out.str();
}

inline LexedDocument import_token_stream(std::string_view serialized) {
  LexedDocument doc;
  std::optional<SpacingLabel> pending;
  bool have_trailing = false;
  int line_no = 0;
  std::size_t start = 0;

  auto next_line = [&](std::string_view& line) {
    if (start >= serialized.size()) return false;
    std::size_t nl = serialized.find('\n', start);
    if (nl == std::string_view::npos) nl = serialized.size();
    line = serialized.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    return true;
  };

  std::string_view line;
  if (!next_line(line) || line != kTokenStreamHeader) {
    throw FormatError("missing header '" + std::string(kTokenStreamHeader) + "'",
                      1);
  }

  while (next_line(line)) {
    const auto fields = detail::split_spaces(line);
    if (fields[0] == "L") {
      if (fields.size() != 3 && fields.size() != 4) {
        throw FormatError("label record needs 3 or 4 fields", line_no);
      }
      if (pending) throw FormatError("label not followed by a token", line_no);
      if (have_trailing) throw FormatError("record after trailing label", line_no);
      const auto nl = detail::parse_int(fields[1], line_no, "newline count");
      const auto h = detail::parse_int(fields[2], line_no, "horizontal count");
      if (nl < 0 || nl > SpacingLabel::kMaxNewlines || h < 0 ||
          h > SpacingLabel::kMaxHorizontal) {
        throw FormatError("label out of range", line_no);
      }
      SpacingLabel label{static_cast<int>(nl), static_cast<int>(h),
                         std::nullopt};
      if (fields.size() == 4) {
        std::string raw = unescape_field(fields[3], line_no);
        if (!std::all_of(raw.begin(), raw.end(), is_blank)) {
          throw FormatError("raw spacing contains non-blank bytes", line_no);
        }
        if (SpacingLabel::quantize(raw).cls() != label.cls()) {
          throw FormatError("raw spacing does not match its class", line_no);
        }
        label.raw = std::move(raw);
      }
      pending = std::move(label);
    } else if (fields[0] == "T") {
      if (fields.size() != 5) {
        throw FormatError("token record needs 5 fields", line_no);
      }
      if (!pending) throw FormatError("token without preceding label", line_no);
      const auto kind = fields[1].size() == 1 ? kind_from_char(fields[1][0])
                                              : std::nullopt;
      if (!kind) throw FormatError("bad token kind", line_no);
      const auto tl = detail::parse_int(fields[2], line_no, "line");
      const auto tc = detail::parse_int(fields[3], line_no, "column");
      if (tl < 1 || tc < 0) throw FormatError("bad token position", line_no);
      std::string text = unescape_field(fields[4], line_no);
      if (text.empty()) throw FormatError("empty lexeme", line_no);
      Token tok{std::move(text), *kind, static_cast<int>(tl),
                static_cast<int>(tc)};
      if (!doc.items.empty()) {
        const Token& prev = doc.items.back().token;
        if (std::pair(prev.line, prev.col) >= std::pair(tok.line, tok.col)) {
          throw FormatError("token positions must increase", line_no);
        }
      }
      doc.items.push_back({std::move(*pending), std::move(tok)});
      pending.reset();
    } else if (fields[0] == "S") {
      if (fields.size() != 2) throw FormatError("sentence record needs 2 fields", line_no);
      if (pending && !have_trailing) {
        doc.trailing = std::move(*pending);
        pending.reset();
        have_trailing = true;
      }
      const auto idx = detail::parse_int(fields[1], line_no, "sentence index");
      if (idx < 0 || static_cast<std::size_t>(idx) >= doc.items.size()) {
        throw FormatError("sentence index out of range", line_no);
      }
      const auto uidx = static_cast<std::size_t>(idx);
      if (!doc.sentence_ends.empty() && doc.sentence_ends.back() >= uidx) {
        throw FormatError("sentence indices must increase", line_no);
      }
      doc.sentence_ends.push_back(uidx);
    } else {
      throw FormatError("unknown record '" + std::string(fields[0]) + "'",
                        line_no);
    }
  }
  if (pending) doc.trailing = std::move(*pending);

  for (std::size_t end : doc.sentence_ends) {
    if (doc.items[end].token.text != "." && end != doc.items.size() - 1) {
      throw FormatError("sentence end " + std::to_string(end) +
                            " is not a terminator",
                        line_no);
    }
  }
  if (!doc.items.empty() &&
      (doc.sentence_ends.empty() ||
       doc.sentence_ends.back() != doc.items.size() - 1)) {
    throw FormatError("last token must end a sentence", line_no);
  }
  return doc;
}

}  // namespace spacefmt
