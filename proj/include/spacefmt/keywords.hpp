#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>
#include <string>
#include <string_view>

#include "spacefmt/errors.hpp"

namespace spacefmt {

/// Keyword tables used to tag tokens as Vernacular, Ltac or Gallina.
///
/// The built-in tables mirror data/keywords/{vernacular,ltac,gallina}.txt.
/// Users with a different dialect can load their own copies of those files.
struct KeywordTables {
  std::set<std::string, std::less<>> vernacular;
  std::set<std::string, std::less<>> ltac;
  std::set<std::string, std::less<>> gallina;

  static const KeywordTables& builtin();

  /// Reads vernacular.txt, ltac.txt and gallina.txt from `dir`. One keyword
  /// per line; blank lines and lines starting with '#' are ignored.
  static KeywordTables load(const std::filesystem::path& dir);
};

namespace detail {

inline std::set<std::string, std::less<>> make_table(
    std::initializer_list<const char*> words) {
  std::set<std::string, std::less<>> out;
  for (const char* w : words) out.emplace(w);
  return out;
}

inline std::set<std::string, std::less<>> read_table(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read keyword table " + path.string());
  std::set<std::string, std::less<>> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.pop_back();
    }
    if (line.empty() || line.front() == '#') continue;
    out.insert(line);
  }
  return out;
}

}  // namespace detail

inline const KeywordTables& KeywordTables::builtin() {
  static const KeywordTables tables{
      detail::make_table(
          {"Abort",       "Add",          "Admitted",    "Arguments",
           "Axiom",       "Bind",         "Canonical",   "Check",
           "Class",       "Close",        "CoFixpoint",  "CoInductive",
           "Coercion",    "Compute",      "Conjecture",  "Context",
           "Corollary",   "Declare",      "Defined",     "Definition",
           "Delimit",     "End",          "Eval",        "Example",
           "Existing",    "Export",       "Fact",        "Fixpoint",
           "From",        "Generalizable", "Global",     "Goal",
           "Hint",        "Hypotheses",   "Hypothesis",  "Implicit",
           "Import",      "Include",      "Inductive",   "Infix",
           "Instance",    "Lemma",        "Let",         "Local",
           "Ltac",        "Module",       "Notation",    "Obligation",
           "Opaque",      "Open",         "Parameter",   "Parameters",
           "Prenex",      "Print",        "Program",     "Proof",
           "Proposition", "Qed",          "Record",      "Remark",
           "Require",     "Reserved",     "Scope",       "Search",
           "Section",     "Set",          "Show",        "Structure",
           "Tactic",      "Theorem",      "Transparent", "Unset",
           "Variable",    "Variables",    "Variant"}),
      detail::make_table(
          {"=>",           ";",         "abstract",     "apply",
           "assumption",   "auto",      "by",           "case",
           "congr",        "constructor", "contradiction", "destruct",
           "do",           "done",      "elim",         "exact",
           "exists",       "first",     "have",         "induction",
           "injection",    "intro",     "intros",       "last",
           "left",         "move",      "pose",         "reflexivity",
           "repeat",       "rewrite",   "right",        "simpl",
           "split",        "subst",     "suff",         "suffices",
           "symmetry",     "transitivity", "trivial",   "try",
           "unfold",       "wlog"}),
      detail::make_table({"->", ":", ":=", "<-", "=", "Prop", "Set", "Type",
                          "as", "cofix", "else", "end", "fix", "forall",
                          "fun", "if", "in", "let", "match", "return", "then",
                          "with"}),
  };
  return tables;
}

inline KeywordTables KeywordTables::load(const std::filesystem::path& dir) {
  return KeywordTables{detail::read_table(dir / "vernacular.txt"),
                       detail::read_table(dir / "ltac.txt"),
                       detail::read_table(dir / "gallina.txt")};
}

}  // namespace spacefmt
