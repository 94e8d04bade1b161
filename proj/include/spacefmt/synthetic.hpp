#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "spacefmt/random.hpp"

namespace spacefmt::synthetic {

// Deterministic generator of Coq-like files that follow one fixed style:
//   * no space around "=>"
//   * one space between identifiers and around infix operators
//   * no space before "." or ")" and none after "("
//   * exactly one blank line between top-level sentences
//   * proof sentences on their own lines, indented by 2 after "Proof."

namespace detail {

inline constexpr std::array<std::string_view, 8> kVars = {"x", "y", "z", "n", "m", "p", "q", "k"};
inline constexpr std::array<std::string_view, 16> kRules = {
    "addnC", "addnA", "mulnC", "mulnA", "addn0", "add0n", "muln1", "mul1n",
    "subnn", "addKn", "ltnS",  "leqnn", "eqxx",  "andbC", "orbC",  "negbK"};
inline constexpr std::array<std::string_view, 10> kStems = {
    "addn", "muln", "subn", "leq", "ltn", "eqn", "maxn", "minn", "double", "half"};
inline constexpr std::array<std::string_view, 4> kSuffixes = {"C", "A", "S", "K"};
inline constexpr std::array<std::string_view, 3> kOps = {"+", "*", "-"};
inline constexpr std::array<std::string_view, 4> kSections = {"Arith", "Basics", "Theory", "Facts"};

class Builder {
 public:
  explicit Builder(Rng& rng) : rng_(rng) {}

  template <std::size_t N>
  std::string_view pick(const std::array<std::string_view, N>& pool) {
    return pool[uniform_index(rng_, N)];
  }
  std::uint64_t below(std::uint64_t n) { return uniform_index(rng_, n); }

  std::string var() { return std::string(pick(kVars)); }

  std::string fresh_name() {
    return std::string(pick(kStems)) + std::string(pick(kSuffixes)) + "_" +
           std::to_string(below(40));
  }

  /// `a op b [op c]`
  std::string expr() {
    std::string e = var();
    const auto terms = 2 + below(2);
    for (std::uint64_t i = 1; i < terms; ++i) {
      e += " ";
      e += pick(kOps);
      e += " " + var();
    }
    return e;
  }

  std::string binders() {
    std::string b = "(" + var();
    if (below(2)) b += " " + var();
    return b + " : nat)";
  }

  std::string tactic() {
    switch (below(5)) {
      case 0: return "move=>" + var() + " /=.";
      case 1: {
        std::string t = "rewrite ";
        if (below(3) == 0) t += "-";
        return t + std::string(pick(kRules)) + " " + std::string(pick(kRules)) + ".";
      }
      case 2: return "case=>" + var() + " //.";
      case 3: return "apply: " + std::string(pick(kRules)) + ".";
      default: return "apply/eqP.";
    }
  }

  std::string closing_tactic() { return below(2) ? "by []." : "done."; }

  std::string definition() {
    return "Definition " + fresh_name() + " " + binders() + " := if " + var() +
           " == 0 then " + var() + " else " + var() + ".";
  }

  std::string lemma() {
    std::string s = "Lemma " + fresh_name() + " " + binders() + " : " + expr() + " = " +
                    std::to_string(below(3)) + ".\nProof.\n";
    const auto steps = below(4);
    for (std::uint64_t i = 0; i < steps; ++i) s += "  " + tactic() + "\n";
    s += "  " + closing_tactic() + "\nQed.";
    return s;
  }

 private:
  Rng& rng_;
};

}  // namespace detail

/// One synthetic file. Identical (seed, index) pairs give identical text.
inline std::string generate_file(std::uint64_t seed, std::size_t index) {
  Rng rng(seed * 0x9E3779B97F4A7C15ULL + index);
  detail::Builder b(rng);
  std::vector<std::string> blocks;
  blocks.emplace_back("From mathcomp Require Import ssreflect ssrbool ssrnat.");
  blocks.emplace_back("Set Implicit Arguments.");
  const bool section = b.below(2) == 1;
  std::string section_name;
  if (section) {
    section_name = std::string(b.pick(detail::kSections));
    blocks.push_back("Section " + section_name + ".");
  }
  const auto items = 3 + b.below(5);
  for (std::uint64_t i = 0; i < items; ++i) {
    blocks.push_back(b.below(3) == 0 ? b.definition() : b.lemma());
  }
  if (section) blocks.push_back("End " + section_name + ".");

  std::string out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += blocks[i];
  }
  out += "\n";
  return out;
}

/// `count` files named synth_000.v, synth_001.v, ... with their contents.
inline std::vector<std::pair<std::string, std::string>> generate_corpus(std::size_t count,
                                                                        std::uint64_t seed) {
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string name = std::to_string(i);
    name = "synth_" + std::string(name.size() < 3 ? 3 - name.size() : 0, '0') + name + ".v";
    out.emplace_back(std::move(name), generate_file(seed, i));
  }
  return out;
}

}  // namespace spacefmt::synthetic
