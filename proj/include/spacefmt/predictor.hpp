#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "spacefmt/brnn.hpp"
#include "spacefmt/corpus.hpp"
#include "spacefmt/lexer.hpp"
#include "spacefmt/ngram.hpp"

namespace spacefmt {

/// Anything that ranks spacing labels at every slot of an encoded document.
class SpacingPredictor {
 public:
  virtual ~SpacingPredictor() = default;

  virtual std::string name() const = 0;
  virtual const Vocabulary& vocab() const = 0;
  virtual const LabelVocabulary& labels() const = 0;

  /// One ranking per slot, using the document's own labels as left context.
  virtual std::vector<Ranking> rank_slots(const EncodedDocument& doc) const = 0;

  /// Greedy left-to-right decoding: each slot takes the best-ranked label
  /// allowed by its constraint, and that label becomes left context for the
  /// following slots.
  virtual std::vector<SpacingClass> decode_greedy(
      const EncodedDocument& doc, std::span<const SlotConstraint> constraints) const = 0;

  std::uint64_t fingerprint() const { return vocab_fingerprint(vocab(), labels()); }

  EncodedDocument encode(const LexedDocument& doc) const {
    return spacefmt::encode(doc, vocab(), labels());
  }

 protected:
  void check(const EncodedDocument& doc) const {
    if (doc.fingerprint != fingerprint()) {
      throw VocabMismatch("document and predictor '" + name() +
                          "' use different vocabularies");
    }
  }

  /// First label in `ranking` allowed by `constraint`; a synthesized
  /// single space or empty label if none of the known labels qualifies.
  SpacingClass pick(const Ranking& ranking, const SlotConstraint& constraint,
                    std::uint32_t& label_id) const {
    for (const auto& r : ranking) {
      const SpacingClass c = labels().cls(r.label);
      if (constraint.allows(c)) {
        label_id = r.label;
        return c;
      }
    }
    const SpacingClass c = constraint.require_space ? SpacingClass{0, 1} : SpacingClass{0, 0};
    label_id = labels().id_or_fallback(c);
    return c;
  }
};

class NgramPredictor final : public SpacingPredictor {
 public:
  explicit NgramPredictor(NgramModel model, std::string name = "ngram")
      : model_(std::move(model)), name_(std::move(name)) {}

  std::string name() const override { return name_; }
  const Vocabulary& vocab() const override { return model_.vocab(); }
  const LabelVocabulary& labels() const override { return model_.labels(); }
  const NgramModel& model() const { return model_; }

  std::vector<Ranking> rank_slots(const EncodedDocument& doc) const override {
    check(doc);
    std::vector<Ranking> out;
    out.reserve(doc.slots());
    const std::span<const std::uint32_t> stream(doc.stream);
    for (std::size_t i = 0; i < doc.slots(); ++i) {
      out.push_back(model_.predict_spacing(stream.first(2 * i)));
    }
    return out;
  }

  std::vector<SpacingClass> decode_greedy(
      const EncodedDocument& doc, std::span<const SlotConstraint> constraints) const override {
    check(doc);
    std::vector<std::uint32_t> stream = doc.stream;
    std::vector<SpacingClass> out;
    out.reserve(doc.slots());
    for (std::size_t i = 0; i < doc.slots(); ++i) {
      const Ranking r =
          model_.predict_spacing(std::span<const std::uint32_t>(stream).first(2 * i));
      std::uint32_t id = 0;
      out.push_back(pick(r, constraints[i], id));
      stream[2 * i] = doc.space.label(id);
    }
    return out;
  }

 private:
  NgramModel model_;
  std::string name_;
};

class BrnnPredictor final : public SpacingPredictor {
 public:
  explicit BrnnPredictor(BrnnModel model, std::string name = "brnn")
      : model_(std::move(model)), name_(std::move(name)) {}

  std::string name() const override { return name_; }
  const Vocabulary& vocab() const override { return model_.vocab(); }
  const LabelVocabulary& labels() const override { return model_.labels(); }
  const BrnnModel& model() const { return model_; }

  std::vector<Ranking> rank_slots(const EncodedDocument& doc) const override {
    check(doc);
    const MatrixXd dist = model_.predict_all(doc);
    std::vector<Ranking> out(doc.slots());
    for (std::size_t i = 0; i < doc.slots(); ++i) {
      out[i] = to_ranking(dist.col(static_cast<Eigen::Index>(i)));
    }
    return out;
  }

  std::vector<SpacingClass> decode_greedy(
      const EncodedDocument& doc, std::span<const SlotConstraint> constraints) const override {
    check(doc);
    std::vector<SpacingClass> out(doc.slots());
    model_.decode_greedy(doc, [&](std::size_t slot, const VectorXd& dist) {
      std::uint32_t id = 0;
      out[slot] = pick(to_ranking(dist), constraints[slot], id);
      return id;
    });
    return out;
  }

 private:
  static Ranking to_ranking(const Eigen::Ref<const VectorXd>& dist) {
    Ranking r(static_cast<std::size_t>(dist.size()));
    for (Eigen::Index l = 0; l < dist.size(); ++l) {
      r[static_cast<std::size_t>(l)] = {static_cast<std::uint32_t>(l), dist(l)};
    }
    sort_ranking(r);
    return r;
  }

  BrnnModel model_;
  std::string name_;
};

/// Loads an n-gram or BRNN model file, dispatching on its magic bytes.
inline std::unique_ptr<SpacingPredictor> load_predictor(const std::filesystem::path& path,
                                                        std::string name = {}) {
  std::string data;
  try {
    data = read_file(path);
  } catch (const IoError& e) {
    throw ModelIoError(e.what());
  }
  if (data.starts_with(NgramModel::kMagic)) {
    return std::make_unique<NgramPredictor>(NgramModel::deserialize(data),
                                            name.empty() ? "ngram" : name);
  }
  if (data.starts_with(BrnnModel::kMagic)) {
    return std::make_unique<BrnnPredictor>(BrnnModel::deserialize(data),
                                           name.empty() ? "brnn" : name);
  }
  throw ModelIoError("unrecognized model file " + path.string());
}

/// Re-spaces `doc` with greedy top-1 predictions and renders the result.
inline std::string reformat(const SpacingPredictor& predictor, const LexedDocument& doc) {
  const EncodedDocument encoded = predictor.encode(doc);
  const auto constraints = slot_constraints(doc);
  const auto chosen = predictor.decode_greedy(encoded, constraints);
  LexedDocument out = doc;
  for (std::size_t i = 0; i < out.items.size(); ++i) {
    out.items[i].label = SpacingLabel::synthesized(chosen[i]);
  }
  return render_canonical(out);
}

}  // namespace spacefmt
