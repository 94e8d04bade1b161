#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spacefmt/binary_io.hpp"
#include "spacefmt/corpus.hpp"
#include "spacefmt/errors.hpp"
#include "spacefmt/ngram.hpp"
#include "spacefmt/random.hpp"

namespace spacefmt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct BrnnDims {
  int embed = 64;
  int hidden = 128;

  friend bool operator==(const BrnnDims&, const BrnnDims&) = default;
};

/// Chunking of an interleaved stream into overlapping windows. Each label slot
/// is owned by exactly one segment (the one whose interior contains it) and is
/// predicted from that segment's context only.
struct SegmentLayout {
  int length = 256;
  int overlap = 32;

  struct Segment {
    std::size_t begin, end;                    // context window [begin, end)
    std::size_t interior_begin, interior_end;  // owned positions
  };

  void validate() const {
    if (length < 2 || length % 2 != 0) {
      throw std::invalid_argument("segment length must be even and >= 2");
    }
    if (overlap < 0 || overlap % 2 != 0 || overlap >= length) {
      throw std::invalid_argument("segment overlap must be even and < segment length");
    }
  }

  std::vector<Segment> segments(std::size_t n) const {
    std::vector<Segment> out;
    if (n == 0) return out;
    const auto len = static_cast<std::size_t>(length);
    const auto stride = static_cast<std::size_t>(length - overlap);
    const auto half = static_cast<std::size_t>(overlap / 4 * 2);  // keeps interiors on label slots
    const std::size_t k = n <= len ? 1 : 1 + (n - len + stride - 1) / stride;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t a = i * stride;
      out.push_back({a, std::min(a + len, n), i == 0 ? 0 : a + half,
                     i + 1 == k ? n : a + stride + half});
    }
    return out;
  }

  std::size_t owner(std::size_t n, std::size_t pos) const {
    const auto segs = segments(n);
    for (std::size_t i = 0; i < segs.size(); ++i) {
      if (pos >= segs[i].interior_begin && pos < segs[i].interior_end) return i;
    }
    throw std::out_of_range("position outside stream");
  }

  friend bool operator==(const SegmentLayout&, const SegmentLayout&) = default;
};

struct TrainingConfig {
  double learning_rate = 1e-3;
  double gradient_clip_norm = 5.0;
  int max_epochs = 30;
  int early_stop_patience = 3;
  int segment_length = 256;
  int segment_overlap = 32;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  SegmentLayout layout() const { return {segment_length, segment_overlap}; }

  void validate() const {
    layout().validate();
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    if (early_stop_patience < 0) throw std::invalid_argument("patience must be >= 0");
    if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
    if (!(gradient_clip_norm > 0)) throw std::invalid_argument("clip norm must be positive");
  }
};

/// Gated recurrent cell: update gate z, reset gate r, candidate n.
struct GruCell {
  MatrixXd Wz, Wr, Wn;  // hidden x embed
  MatrixXd Uz, Ur, Un;  // hidden x hidden
  MatrixXd bz, br, bn;  // hidden x 1
};

/// Every trainable tensor. The order of tensors() is the on-disk order.
struct BrnnParams {
  MatrixXd token_embedding;  // embed x |tokens|, one column per token
  MatrixXd label_embedding;  // embed x |labels|
  GruCell forward;
  GruCell backward;
  MatrixXd output_weight;  // |labels| x 2*hidden
  MatrixXd output_bias;    // |labels| x 1

  static constexpr std::size_t kTensorCount = 22;

  std::array<MatrixXd*, kTensorCount> tensors() {
    return {&token_embedding, &label_embedding,
            &forward.Wz,  &forward.Wr,  &forward.Wn,
            &forward.Uz,  &forward.Ur,  &forward.Un,
            &forward.bz,  &forward.br,  &forward.bn,
            &backward.Wz, &backward.Wr, &backward.Wn,
            &backward.Uz, &backward.Ur, &backward.Un,
            &backward.bz, &backward.br, &backward.bn,
            &output_weight, &output_bias};
  }
  std::array<const MatrixXd*, kTensorCount> tensors() const {
    auto t = const_cast<BrnnParams*>(this)->tensors();
    std::array<const MatrixXd*, kTensorCount> out;
    std::copy(t.begin(), t.end(), out.begin());
    return out;
  }

  static constexpr std::array<const char*, kTensorCount> kNames = {
      "token_embedding", "label_embedding",
      "fwd.Wz", "fwd.Wr", "fwd.Wn", "fwd.Uz", "fwd.Ur", "fwd.Un",
      "fwd.bz", "fwd.br", "fwd.bn",
      "bwd.Wz", "bwd.Wr", "bwd.Wn", "bwd.Uz", "bwd.Ur", "bwd.Un",
      "bwd.bz", "bwd.br", "bwd.bn",
      "out.W", "out.b"};

  /// Zero tensors of the shapes implied by the dimensions.
  static BrnnParams zeros(BrnnDims d, std::size_t tokens, std::size_t labels) {
    const auto e = d.embed, h = d.hidden;
    const auto t = static_cast<Eigen::Index>(tokens);
    const auto l = static_cast<Eigen::Index>(labels);
    auto cell = [&] {
      return GruCell{MatrixXd::Zero(h, e), MatrixXd::Zero(h, e), MatrixXd::Zero(h, e),
                     MatrixXd::Zero(h, h), MatrixXd::Zero(h, h), MatrixXd::Zero(h, h),
                     MatrixXd::Zero(h, 1), MatrixXd::Zero(h, 1), MatrixXd::Zero(h, 1)};
    };
    return {MatrixXd::Zero(e, t), MatrixXd::Zero(e, l), cell(), cell(),
            MatrixXd::Zero(l, 2 * h), MatrixXd::Zero(l, 1)};
  }

  /// Fan-in used by initialization; 0 marks a bias.
  static int fan_in(std::size_t tensor, BrnnDims d) {
    switch (tensor) {
      case 0: case 1: return d.embed;
      case 2: case 3: case 4: case 11: case 12: case 13: return d.embed;
      case 5: case 6: case 7: case 14: case 15: case 16: return d.hidden;
      case 20: return 2 * d.hidden;
      default: return 0;
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* t : tensors()) n += static_cast<std::size_t>(t->size());
    return n;
  }

  bool all_finite() const {
    for (const auto* t : tensors()) {
      if (!t->allFinite()) return false;
    }
    return true;
  }

  void set_zero() {
    for (auto* t : tensors()) t->setZero();
  }

  double squared_norm() const {
    double s = 0;
    for (const auto* t : tensors()) s += t->squaredNorm();
    return s;
  }

  void scale(double f) {
    for (auto* t : tensors()) *t *= f;
  }

  friend bool operator==(const BrnnParams& a, const BrnnParams& b) {
    const auto ta = a.tensors();
    const auto tb = b.tensors();
    for (std::size_t i = 0; i < kTensorCount; ++i) {
      if (ta[i]->rows() != tb[i]->rows() || ta[i]->cols() != tb[i]->cols() ||
          *ta[i] != *tb[i]) {
        return false;
      }
    }
    return true;
  }
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Activations of one GRU run over the columns of `x`. states.col(t) is the
/// hidden state after consuming t inputs; states.col(0) is zero.
struct GruTrace {
  MatrixXd x;
  MatrixXd states;
  MatrixXd z, r, n, rh;
};

inline GruTrace run_gru(const GruCell& c, MatrixXd x) {
  const auto h = c.Uz.rows();
  const auto steps = x.cols();
  GruTrace tr;
  tr.states = MatrixXd::Zero(h, steps + 1);
  tr.z.resize(h, steps);
  tr.r.resize(h, steps);
  tr.n.resize(h, steps);
  tr.rh.resize(h, steps);
  if (steps > 0) {
    MatrixXd az = c.Wz * x;
    MatrixXd ar = c.Wr * x;
    MatrixXd an = c.Wn * x;
    az.colwise() += c.bz.col(0);
    ar.colwise() += c.br.col(0);
    an.colwise() += c.bn.col(0);
    VectorXd hp = VectorXd::Zero(h);
    for (Eigen::Index t = 0; t < steps; ++t) {
      const VectorXd z = (az.col(t) + c.Uz * hp).unaryExpr(&sigmoid);
      const VectorXd r = (ar.col(t) + c.Ur * hp).unaryExpr(&sigmoid);
      const VectorXd rh = r.cwiseProduct(hp);
      const VectorXd n = (an.col(t) + c.Un * rh).array().tanh().matrix();
      hp = (VectorXd::Ones(h) - z).cwiseProduct(n) + z.cwiseProduct(hp);
      tr.z.col(t) = z;
      tr.r.col(t) = r;
      tr.n.col(t) = n;
      tr.rh.col(t) = rh;
      tr.states.col(t + 1) = hp;
    }
  }
  tr.x = std::move(x);
  return tr;
}

/// Backpropagates `d_states` (gradient w.r.t. every state column) through the
/// run, accumulating into `g` and returning the gradient w.r.t. the inputs.
inline MatrixXd backprop_gru(const GruCell& c, const GruTrace& tr,
                             const MatrixXd& d_states, GruCell& g) {
  const auto h = c.Uz.rows();
  const auto steps = tr.x.cols();
  MatrixXd daz(h, steps), dar(h, steps), dan(h, steps);
  VectorXd carry = VectorXd::Zero(h);
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const VectorXd dh = d_states.col(t + 1) + carry;
    const auto hp = tr.states.col(t);
    const auto z = tr.z.col(t);
    const auto r = tr.r.col(t);
    const auto n = tr.n.col(t);
    const VectorXd dn = dh.cwiseProduct(VectorXd::Ones(h) - z);
    const VectorXd dz = dh.cwiseProduct(hp - n);
    const VectorXd a_n = dn.array() * (1.0 - n.array().square());
    const VectorXd a_z = dz.array() * z.array() * (1.0 - z.array());
    const VectorXd drh = c.Un.transpose() * a_n;
    const VectorXd dr = drh.cwiseProduct(hp);
    const VectorXd a_r = dr.array() * r.array() * (1.0 - r.array());
    carry = dh.cwiseProduct(z) + drh.cwiseProduct(r) + c.Uz.transpose() * a_z +
            c.Ur.transpose() * a_r;
    daz.col(t) = a_z;
    dar.col(t) = a_r;
    dan.col(t) = a_n;
  }
  if (steps > 0) {
    const auto prev = tr.states.leftCols(steps);
    g.Wz.noalias() += daz * tr.x.transpose();
    g.Wr.noalias() += dar * tr.x.transpose();
    g.Wn.noalias() += dan * tr.x.transpose();
    g.Uz.noalias() += daz * prev.transpose();
    g.Ur.noalias() += dar * prev.transpose();
    g.Un.noalias() += dan * tr.rh.transpose();
    g.bz.col(0) += daz.rowwise().sum();
    g.br.col(0) += dar.rowwise().sum();
    g.bn.col(0) += dan.rowwise().sum();
  }
  MatrixXd dx = c.Wz.transpose() * daz;
  dx.noalias() += c.Wr.transpose() * dar;
  dx.noalias() += c.Wn.transpose() * dan;
  return dx;
}

inline VectorXd softmax(const VectorXd& logits) {
  const double m = logits.maxCoeff();
  VectorXd e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

}  // namespace detail

struct EpochStats {
  double train_loss;
  double val_top1;  // NaN when no validation documents were given
};

struct GradCheckResult {
  double max_relative_error = 0;
  std::size_t coordinates = 0;
};

/// Bi-directional recurrent spacing classifier.
///
/// The left state is a forward GRU over the interleaved labels and tokens
/// strictly before the slot; the right state is a second GRU run from the
/// segment end back to the token right after the slot, over token ids only.
/// The softmax layer sees both states concatenated.
class BrnnModel {
 public:
  static constexpr std::string_view kMagic = "SFBR";
  static constexpr std::uint16_t kVersion = 1;

  BrnnModel() = default;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  static BrnnModel init(BrnnDims dims, Vocabulary vocab, LabelVocabulary labels,
                        std::uint64_t seed, SegmentLayout layout = {}) {
    if (dims.embed < 1 || dims.hidden < 1) {
      throw std::invalid_argument("model dimensions must be positive");
    }
    if (labels.size() == 0) throw std::invalid_argument("empty label vocabulary");
    layout.validate();
    BrnnModel m;
    m.dims_ = dims;
    m.seed_ = seed;
    m.layout_ = layout;
    m.vocab_ = std::move(vocab);
    m.labels_ = std::move(labels);
    m.fingerprint_ = vocab_fingerprint(m.vocab_, m.labels_);
    m.params_ = BrnnParams::zeros(dims, m.vocab_.size(), m.labels_.size());
    Rng rng(seed);
    auto tensors = m.params_.tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const int fan = BrnnParams::fan_in(i, dims);
      if (fan == 0) continue;
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan));
      MatrixXd& t = *tensors[i];
      for (Eigen::Index k = 0; k < t.size(); ++k) {
        t.data()[k] = (2.0 * uniform_unit(rng) - 1.0) * bound;
      }
    }
    return m;
  }

  const BrnnDims& dims() const { return dims_; }
  const Vocabulary& vocab() const { return vocab_; }
  const LabelVocabulary& labels() const { return labels_; }
  const SegmentLayout& layout() const { return layout_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t fingerprint() const { return fingerprint_; }
  BrnnParams& params() { return params_; }
  const BrnnParams& params() const { return params_; }
  void set_layout(SegmentLayout layout) {
    layout.validate();
    layout_ = layout;
  }

  /// Label distribution at stream position `pos` (must be a label slot).
  VectorXd predict_distribution(const EncodedDocument& doc, std::size_t pos) const {
    check_doc(doc);
    if (pos % 2 != 0 || pos >= doc.stream.size()) {
      throw ParityError("position " + std::to_string(pos) + " is not a label slot");
    }
    const auto segs = layout_.segments(doc.stream.size());
    const auto& seg = segs[layout_.owner(doc.stream.size(), pos)];
    const SegmentRun run = run_segment(doc.stream, seg);
    return detail::softmax(logits(run, seg, pos));
  }

  /// Distributions for every slot of the document, one column per slot.
  MatrixXd predict_all(const EncodedDocument& doc) const {
    check_doc(doc);
    const auto l = static_cast<Eigen::Index>(labels_.size());
    MatrixXd out(l, static_cast<Eigen::Index>(doc.slots()));
    for (const auto& seg : layout_.segments(doc.stream.size())) {
      const SegmentRun run = run_segment(doc.stream, seg);
      for (std::size_t p = first_slot(seg); p < seg.interior_end; p += 2) {
        out.col(static_cast<Eigen::Index>(p / 2)) = detail::softmax(logits(run, seg, p));
      }
    }
    return out;
  }

  /// Left-to-right decoding that feeds each chosen label back into the
  /// forward context. `choose` maps (slot, distribution) to a label id.
  std::vector<std::uint32_t> decode_greedy(
      const EncodedDocument& doc,
      const std::function<std::uint32_t(std::size_t, const VectorXd&)>& choose) const {
    check_doc(doc);
    std::vector<std::uint32_t> stream = doc.stream;
    std::vector<std::uint32_t> chosen(doc.slots());
    const auto h = dims_.hidden;
    for (const auto& seg : layout_.segments(stream.size())) {
      const detail::GruTrace right = run_right(stream, seg);
      const std::size_t tokens = (seg.end - seg.begin) / 2;
      VectorXd state = VectorXd::Zero(h);
      for (std::size_t p = seg.begin; p < seg.end; ++p) {
        if (p % 2 == 0 && p >= seg.interior_begin && p < seg.interior_end) {
          const std::size_t m = (p - seg.begin) / 2;
          VectorXd cat(2 * h);
          cat << state, right.states.col(static_cast<Eigen::Index>(tokens - m));
          const VectorXd dist = detail::softmax(params_.output_weight * cat + params_.output_bias.col(0));
          const std::uint32_t label = choose(p / 2, dist);
          chosen[p / 2] = label;
          stream[p] = doc.space.label(label);
        }
        state = step(params_.forward, state, embed(stream[p], doc.space));
      }
    }
    return chosen;
  }

  /// Sum of cross-entropy over the owned slots of `seg` (or only `only_pos`
  /// when given) and the number of slots counted. Accumulates the gradient
  /// into `grad` when non-null. Slots whose true label is out of vocabulary are
  /// skipped.
  std::pair<double, std::size_t> segment_loss(const EncodedDocument& doc,
                                              const SegmentLayout::Segment& seg,
                                              BrnnParams* grad,
                                              std::optional<std::size_t> only_pos = std::nullopt) const {
    const auto h = dims_.hidden;
    const SegmentRun run = run_segment(doc.stream, seg);
    const auto steps = static_cast<Eigen::Index>(seg.end - seg.begin);
    const auto tokens = steps / 2;
    MatrixXd d_left, d_right, dW, db;
    if (grad) {
      d_left = MatrixXd::Zero(h, steps + 1);
      d_right = MatrixXd::Zero(h, tokens + 1);
    }
    double loss = 0;
    std::size_t counted = 0;
    for (std::size_t p = first_slot(seg); p < seg.interior_end; p += 2) {
      if (only_pos && p != *only_pos) continue;
      if (doc.label_oov[p / 2]) continue;
      const std::uint32_t y = doc.stream[p];
      const VectorXd prob = detail::softmax(logits(run, seg, p));
      loss -= std::log(std::max(prob(y), 1e-300));
      ++counted;
      if (!grad) continue;
      VectorXd dlogits = prob;
      dlogits(y) -= 1.0;
      const auto q = static_cast<Eigen::Index>(p - seg.begin);
      const auto m = q / 2;
      VectorXd cat(2 * h);
      cat << run.left.states.col(q), run.right.states.col(tokens - m);
      grad->output_weight.noalias() += dlogits * cat.transpose();
      grad->output_bias.col(0) += dlogits;
      const VectorXd dcat = params_.output_weight.transpose() * dlogits;
      d_left.col(q) += dcat.head(h);
      d_right.col(tokens - m) += dcat.tail(h);
    }
    if (grad && counted > 0) {
      const MatrixXd dx_left = detail::backprop_gru(params_.forward, run.left, d_left, grad->forward);
      const MatrixXd dx_right = detail::backprop_gru(params_.backward, run.right, d_right, grad->backward);
      for (Eigen::Index t = 0; t < steps; ++t) {
        const std::uint32_t id = doc.stream[seg.begin + static_cast<std::size_t>(t)];
        if (doc.space.is_label(id)) {
          grad->label_embedding.col(id) += dx_left.col(t);
        } else {
          grad->token_embedding.col(id - doc.space.labels) += dx_left.col(t);
        }
      }
      // Right run input j is the token at position end - 1 - 2j.
      for (Eigen::Index j = 0; j < tokens; ++j) {
        const std::size_t pos = seg.end - 1 - 2 * static_cast<std::size_t>(j);
        grad->token_embedding.col(doc.stream[pos] - doc.space.labels) += dx_right.col(j);
      }
    }
    return {loss, counted};
  }

  /// Loss at a single label slot; gradient accumulated into `grad` if given.
  double slot_loss(const EncodedDocument& doc, std::size_t pos, BrnnParams* grad = nullptr) const {
    check_doc(doc);
    if (pos % 2 != 0 || pos >= doc.stream.size()) {
      throw ParityError("position " + std::to_string(pos) + " is not a label slot");
    }
    const auto segs = layout_.segments(doc.stream.size());
    const auto& seg = segs[layout_.owner(doc.stream.size(), pos)];
    EncodedDocument copy = doc;
    copy.label_oov[pos / 2] = false;
    return segment_loss(copy, seg, grad, pos).first;
  }

  BrnnParams zero_gradients() const {
    return BrnnParams::zeros(dims_, vocab_.size(), labels_.size());
  }

  std::string serialize() const {
    binary::Writer w;
    w.bytes(kMagic);
    w.uint(kVersion);
    w.uint(static_cast<std::uint32_t>(dims_.embed));
    w.uint(static_cast<std::uint32_t>(dims_.hidden));
    w.uint(static_cast<std::uint32_t>(vocab_.size()));
    w.uint(static_cast<std::uint32_t>(labels_.size()));
    w.uint(static_cast<std::uint32_t>(layout_.length));
    w.uint(static_cast<std::uint32_t>(layout_.overlap));
    w.uint(seed_);
    binary::write_vocabularies(w, vocab_, labels_);
    for (const auto* t : params_.tensors()) {
      for (Eigen::Index k = 0; k < t->size(); ++k) w.f64(t->data()[k]);
    }
    return w.data();
  }

  static BrnnModel deserialize(std::string_view data) {
    binary::Reader r(data);
    binary::expect_magic(r, kMagic, kVersion);
    BrnnModel m;
    m.dims_.embed = static_cast<int>(r.uint<std::uint32_t>());
    m.dims_.hidden = static_cast<int>(r.uint<std::uint32_t>());
    const auto n_tokens = r.uint<std::uint32_t>();
    const auto n_labels = r.uint<std::uint32_t>();
    m.layout_.length = static_cast<int>(r.uint<std::uint32_t>());
    m.layout_.overlap = static_cast<int>(r.uint<std::uint32_t>());
    m.seed_ = r.uint<std::uint64_t>();
    if (m.dims_.embed < 1 || m.dims_.hidden < 1 || m.dims_.embed > (1 << 16) ||
        m.dims_.hidden > (1 << 16)) {
      throw ModelIoError("corrupt model file: bad dimensions");
    }
    try {
      m.layout_.validate();
    } catch (const std::invalid_argument&) {
      throw ModelIoError("corrupt model file: bad segment layout");
    }
    binary::read_vocabularies(r, m.vocab_, m.labels_);
    if (m.vocab_.size() != n_tokens || m.labels_.size() != n_labels) {
      throw ModelIoError("corrupt model file: vocabulary size mismatch");
    }
    m.fingerprint_ = vocab_fingerprint(m.vocab_, m.labels_);
    m.params_ = BrnnParams::zeros(m.dims_, n_tokens, n_labels);
    if (m.params_.parameter_count() != r.remaining() / 8 || r.remaining() % 8 != 0) {
      throw ModelIoError("corrupt model file: parameter section has wrong size");
    }
    for (auto* t : m.params_.tensors()) {
      for (Eigen::Index k = 0; k < t->size(); ++k) t->data()[k] = r.f64();
    }
    return m;
  }

  void save(const std::filesystem::path& path) const { write_file(path, serialize()); }

  static BrnnModel load(const std::filesystem::path& path) {
    std::string data;
    try {
      data = read_file(path);
    } catch (const IoError& e) {
      throw ModelIoError(e.what());
    }
    return deserialize(data);
  }

 private:
  struct SegmentRun {
    detail::GruTrace left;   // over stream[begin, end)
    detail::GruTrace right;  // over tokens in (begin, end), last to first
  };

  void check_doc(const EncodedDocument& doc) const {
    if (doc.fingerprint != fingerprint_) {
      throw VocabMismatch("document was encoded with a different vocabulary");
    }
  }

  static std::size_t first_slot(const SegmentLayout::Segment& seg) {
    return seg.interior_begin + (seg.interior_begin % 2);
  }

  VectorXd embed(std::uint32_t id, const IdSpace& space) const {
    return space.is_label(id) ? VectorXd(params_.label_embedding.col(id))
                              : VectorXd(params_.token_embedding.col(id - space.labels));
  }

  static VectorXd step(const GruCell& c, const VectorXd& hp, const VectorXd& x) {
    const VectorXd z = (c.Wz * x + c.Uz * hp + c.bz.col(0)).unaryExpr(&detail::sigmoid);
    const VectorXd r = (c.Wr * x + c.Ur * hp + c.br.col(0)).unaryExpr(&detail::sigmoid);
    const VectorXd n = (c.Wn * x + c.Un * r.cwiseProduct(hp) + c.bn.col(0)).array().tanh().matrix();
    return (VectorXd::Ones(hp.size()) - z).cwiseProduct(n) + z.cwiseProduct(hp);
  }

  detail::GruTrace run_right(const std::vector<std::uint32_t>& stream,
                             const SegmentLayout::Segment& seg) const {
    const auto tokens = static_cast<Eigen::Index>((seg.end - seg.begin) / 2);
    const auto labels = static_cast<std::uint32_t>(labels_.size());
    MatrixXd x(dims_.embed, tokens);
    for (Eigen::Index j = 0; j < tokens; ++j) {
      x.col(j) = params_.token_embedding.col(stream[seg.end - 1 - 2 * static_cast<std::size_t>(j)] - labels);
    }
    return detail::run_gru(params_.backward, std::move(x));
  }

  SegmentRun run_segment(const std::vector<std::uint32_t>& stream,
                         const SegmentLayout::Segment& seg) const {
    const auto steps = static_cast<Eigen::Index>(seg.end - seg.begin);
    const IdSpace space{static_cast<std::uint32_t>(labels_.size()),
                        static_cast<std::uint32_t>(vocab_.size())};
    MatrixXd x(dims_.embed, steps);
    for (Eigen::Index t = 0; t < steps; ++t) {
      x.col(t) = embed(stream[seg.begin + static_cast<std::size_t>(t)], space);
    }
    return {detail::run_gru(params_.forward, std::move(x)), run_right(stream, seg)};
  }

  VectorXd logits(const SegmentRun& run, const SegmentLayout::Segment& seg, std::size_t pos) const {
    const auto h = dims_.hidden;
    const auto q = static_cast<Eigen::Index>(pos - seg.begin);
    const auto tokens = static_cast<Eigen::Index>((seg.end - seg.begin) / 2);
    VectorXd out = params_.output_bias.col(0);
    out.noalias() += params_.output_weight.leftCols(h) * run.left.states.col(q);
    out.noalias() += params_.output_weight.rightCols(h) * run.right.states.col(tokens - q / 2);
    return out;
  }

  BrnnDims dims_;
  std::uint64_t seed_ = 0;
  SegmentLayout layout_;
  Vocabulary vocab_;
  LabelVocabulary labels_;
  std::uint64_t fingerprint_ = 0;
  BrnnParams params_;
};

/// Top-1 accuracy over every slot; out-of-vocabulary true labels are misses.
inline double brnn_top1(const BrnnModel& model, std::span<const EncodedDocument> docs) {
  std::size_t correct = 0, total = 0;
  for (const auto& doc : docs) {
    const MatrixXd dist = model.predict_all(doc);
    for (std::size_t i = 0; i < doc.slots(); ++i) {
      ++total;
      if (doc.label_oov[i]) continue;
      Eigen::Index best = 0;
      dist.col(static_cast<Eigen::Index>(i)).maxCoeff(&best);
      if (static_cast<std::uint32_t>(best) == doc.label_id(i)) ++correct;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

/// Mean per-slot cross-entropy without updating anything.
inline double brnn_mean_loss(const BrnnModel& model, std::span<const EncodedDocument> docs) {
  double loss = 0;
  std::size_t n = 0;
  for (const auto& doc : docs) {
    for (const auto& seg : model.layout().segments(doc.stream.size())) {
      const auto [l, c] = model.segment_loss(doc, seg, nullptr);
      loss += l;
      n += c;
    }
  }
  return n == 0 ? 0.0 : loss / static_cast<double>(n);
}

struct TrainResult {
  BrnnModel model;  // best-validation snapshot
  std::vector<EpochStats> history;
  int best_epoch = 0;
};

/// Adam on per-segment mean cross-entropy with global-norm clipping, seeded
/// document shuffling, and early stopping on validation top-1 (on training
/// loss when `val` is empty).
inline TrainResult train_brnn(BrnnModel model, std::span<const EncodedDocument> train,
                              std::span<const EncodedDocument> val,
                              const TrainingConfig& config,
                              const std::function<void(int, const EpochStats&)>& on_epoch = {}) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("no training documents");
  model.set_layout(config.layout());
  for (const auto& doc : train) {
    if (doc.fingerprint != model.fingerprint()) {
      throw VocabMismatch("training document encoded with another vocabulary");
    }
  }

  Rng rng(config.seed);
  BrnnParams grad = model.zero_gradients();
  BrnnParams m1 = model.zero_gradients();
  BrnnParams m2 = model.zero_gradients();
  std::uint64_t t = 0;

  TrainResult result{model, {}, 0};
  double best = -std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0;
    std::size_t slots = 0;
    for (std::size_t di : order) {
      const auto& doc = train[di];
      for (const auto& seg : model.layout().segments(doc.stream.size())) {
        grad.set_zero();
        const auto [loss, counted] = model.segment_loss(doc, seg, &grad);
        if (counted == 0) continue;
        loss_sum += loss;
        slots += counted;
        grad.scale(1.0 / static_cast<double>(counted));
        const double norm = std::sqrt(grad.squared_norm());
        if (norm > config.gradient_clip_norm) grad.scale(config.gradient_clip_norm / norm);

        ++t;
        const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
        auto params = model.params().tensors();
        auto g = grad.tensors();
        auto a = m1.tensors();
        auto b = m2.tensors();
        for (std::size_t k = 0; k < BrnnParams::kTensorCount; ++k) {
          *a[k] = config.beta1 * *a[k] + (1.0 - config.beta1) * *g[k];
          *b[k] = config.beta2 * *b[k] + (1.0 - config.beta2) * g[k]->cwiseProduct(*g[k]);
          params[k]->array() -= config.learning_rate * (a[k]->array() / c1) /
                                ((b[k]->array() / c2).sqrt() + config.adam_epsilon);
        }
      }
    }
    const double epoch_loss = slots == 0 ? 0.0 : loss_sum / static_cast<double>(slots);
    if (!std::isfinite(epoch_loss) || !model.params().all_finite()) {
      throw DivergenceError("training diverged in epoch " + std::to_string(epoch));
    }
    EpochStats stats{epoch_loss, val.empty() ? std::numeric_limits<double>::quiet_NaN()
                                             : brnn_top1(model, val)};
    result.history.push_back(stats);
    if (on_epoch) on_epoch(epoch, stats);

    const double criterion = val.empty() ? -epoch_loss : stats.val_top1;
    if (criterion > best) {
      best = criterion;
      result.model = model;
      result.best_epoch = epoch;
      bad_epochs = 0;
    } else if (++bad_epochs >= config.early_stop_patience) {
      break;
    }
  }
  return result;
}

/// Central-difference check of the analytic slot-loss gradient on randomly
/// sampled coordinates, at least ceil(samples / 22) from every tensor.
inline GradCheckResult gradient_check(const BrnnModel& model, const EncodedDocument& doc,
                                      std::size_t pos, double epsilon,
                                      std::size_t samples = 200,
                                      std::uint64_t sampling_seed = 0) {
  BrnnParams grad = model.zero_gradients();
  model.slot_loss(doc, pos, &grad);

  BrnnModel probe = model;
  Rng rng(sampling_seed);
  GradCheckResult result;
  const std::size_t per_tensor =
      (samples + BrnnParams::kTensorCount - 1) / BrnnParams::kTensorCount;
  auto tensors = probe.params().tensors();
  const auto grads = grad.tensors();
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    MatrixXd& t = *tensors[ti];
    for (std::size_t s = 0; s < per_tensor; ++s) {
      const auto k = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(t.size())));
      const double saved = t.data()[k];
      t.data()[k] = saved + epsilon;
      const double up = probe.slot_loss(doc, pos);
      t.data()[k] = saved - epsilon;
      const double down = probe.slot_loss(doc, pos);
      t.data()[k] = saved;
      const double fd = (up - down) / (2.0 * epsilon);
      const double an = grads[ti]->data()[k];
      const double rel = std::abs(an - fd) / std::max(1e-8, std::abs(an) + std::abs(fd));
      result.max_relative_error = std::max(result.max_relative_error, rel);
      ++result.coordinates;
    }
  }
  return result;
}


/// A fresh model over a synthetic vocabulary plus one random document, for
/// checking gradients without a corpus. The checked slot is the middle one.
struct GradCheckFixture {
  BrnnModel model;
  EncodedDocument doc;
  std::size_t pos = 0;  // stream position of the checked slot
};

inline GradCheckFixture make_gradcheck_fixture(BrnnDims dims, std::uint64_t seed,
                                               std::size_t slots = 16,
                                               std::size_t tokens = 12,
                                               std::size_t labels = 5) {
  if (slots == 0 || tokens == 0 || labels == 0) {
    throw std::invalid_argument("fixture sizes must be positive");
  }
  std::vector<std::pair<std::string, std::uint64_t>> entries;
  for (std::size_t i = 0; i < tokens; ++i) entries.emplace_back("t" + std::to_string(i), 2);
  std::vector<std::pair<SpacingClass, std::uint64_t>> classes;
  for (std::size_t i = 0; i < labels; ++i) {
    classes.push_back({{static_cast<int>(i % 4), static_cast<int>(i / 4)}, 1});
  }
  Vocabulary vocab(std::move(entries), 0, 2);
  LabelVocabulary label_vocab(std::move(classes));

  Rng rng(seed);
  GradCheckFixture f;
  f.doc.space = id_space(vocab, label_vocab);
  f.doc.fingerprint = vocab_fingerprint(vocab, label_vocab);
  for (std::size_t i = 0; i < slots; ++i) {
    f.doc.stream.push_back(f.doc.space.label(
        static_cast<std::uint32_t>(uniform_index(rng, label_vocab.size()))));
    f.doc.stream.push_back(
        f.doc.space.token(static_cast<std::uint32_t>(uniform_index(rng, vocab.size()))));
    f.doc.label_oov.push_back(false);
  }
  f.pos = 2 * (slots / 2);
  f.model = BrnnModel::init(dims, std::move(vocab), std::move(label_vocab), seed);
  return f;
}

}  // namespace spacefmt
