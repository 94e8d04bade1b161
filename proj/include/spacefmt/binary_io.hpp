#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "spacefmt/corpus.hpp"
#include "spacefmt/errors.hpp"

namespace spacefmt::binary {

// Little-endian, fixed-width encoding shared by the model files.

class Writer {
 public:
  void bytes(std::string_view b) { buf_.append(b); }

  template <typename T>
  void uint(T v) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
  }

  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }

  void string(std::string_view s) {
    uint(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  template <typename T>
  T uint() {
    static_assert(std::is_unsigned_v<T>);
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }

  std::string string() {
    const auto n = uint<std::uint32_t>();
    return std::string(bytes(n));
  }

  /// Guards element counts read from the file before allocating.
  std::size_t count(std::uint64_t n, std::size_t min_bytes_each) {
    if (min_bytes_each > 0 && n > remaining() / min_bytes_each) {
      throw ModelIoError("corrupt model file: implausible element count");
    }
    return static_cast<std::size_t>(n);
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw ModelIoError("truncated model file");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

inline void write_vocabularies(Writer& w, const Vocabulary& vocab,
                               const LabelVocabulary& labels) {
  w.uint(static_cast<std::uint32_t>(vocab.min_count()));
  w.uint(static_cast<std::uint32_t>(vocab.size()));
  for (std::uint32_t id = 0; id < vocab.size(); ++id) {
    w.uint(vocab.count(id));
    w.string(vocab.lexeme(id));
  }
  w.uint(static_cast<std::uint32_t>(labels.size()));
  for (std::uint32_t id = 0; id < labels.size(); ++id) {
    const auto c = labels.cls(id);
    w.uint(static_cast<std::uint8_t>(c.newlines));
    w.uint(static_cast<std::uint8_t>(c.horizontal));
    w.uint(labels.count(id));
  }
}

inline void read_vocabularies(Reader& r, Vocabulary& vocab, LabelVocabulary& labels) {
  const auto min_count = r.uint<std::uint32_t>();
  const auto n_tokens = r.count(r.uint<std::uint32_t>(), 12);
  if (n_tokens == 0) throw ModelIoError("corrupt model file: empty vocabulary");
  std::vector<std::pair<std::string, std::uint64_t>> entries;
  std::uint64_t unk = 0;
  for (std::size_t i = 0; i < n_tokens; ++i) {
    const auto count = r.uint<std::uint64_t>();
    auto lexeme = r.string();
    if (i == 0) {
      unk = count;
    } else {
      entries.emplace_back(std::move(lexeme), count);
    }
  }
  vocab = Vocabulary(std::move(entries), unk, static_cast<int>(min_count));

  const auto n_labels = r.count(r.uint<std::uint32_t>(), 10);
  if (n_labels == 0) throw ModelIoError("corrupt model file: empty label vocabulary");
  std::vector<std::pair<SpacingClass, std::uint64_t>> label_entries;
  for (std::size_t i = 0; i < n_labels; ++i) {
    const int nl = r.uint<std::uint8_t>();
    const int h = r.uint<std::uint8_t>();
    if (nl > SpacingLabel::kMaxNewlines || h > SpacingLabel::kMaxHorizontal) {
      throw ModelIoError("corrupt model file: label out of range");
    }
    label_entries.push_back({{nl, h}, r.uint<std::uint64_t>()});
  }
  labels = LabelVocabulary(std::move(label_entries));
  if (labels.size() != n_labels) {
    throw ModelIoError("corrupt model file: duplicate labels");
  }
}

inline void expect_magic(Reader& r, std::string_view magic, std::uint16_t version) {
  if (r.remaining() < magic.size() || r.bytes(magic.size()) != magic) {
    throw ModelIoError("not a " + std::string(magic) + " model file");
  }
  const auto v = r.uint<std::uint16_t>();
  if (v != version) {
    throw ModelIoError("unsupported model version " + std::to_string(v));
  }
}

}  // namespace spacefmt::binary
