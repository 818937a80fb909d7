#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ksx/error.hpp"
#include "ksx/graph.hpp"
#include "ksx/rng.hpp"
#include "ksx/tensor.hpp"

namespace ksx {

inline constexpr double kReadoutFloor = 1e-9;

struct Architecture {
  int layers = 3;
  int hidden = 32;
  int input_dim = 8;
  int num_classes = 2;
  // One epsilon per message-passing layer; fixed, not learned.
  std::vector<double> epsilons = {0.0, 0.0, 0.0};

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

// GIN-style classifier with soft node masks:
//   h'_v = ReLU(W_l ((1 + eps_l) m_v h_v + sum_{u in N(v)} m_u h_u) + b_l)
// followed by a masked mean readout and a two-layer perceptron head.
//
// Parameters live in one flat vector laid out as
//   [W_0, b_0, ..., W_{L-1}, b_{L-1}, U_1, c_1, U_2, c_2]
// with every weight matrix stored input-major (in x out).
class GnnModel {
 public:
  GnnModel() = default;

  explicit GnnModel(Architecture arch) : arch_(std::move(arch)) {
    require(arch_.layers >= 1 && arch_.hidden >= 1 && arch_.input_dim >= 1 &&
                arch_.num_classes >= 1,
            ErrorKind::InvalidArgument, "invalid architecture");
    require(arch_.epsilons.size() == static_cast<std::size_t>(arch_.layers),
            ErrorKind::InvalidArgument, "one epsilon per layer required");
    for (double e : arch_.epsilons)
      require(std::isfinite(e), ErrorKind::InvalidArgument, "non-finite epsilon");
    std::size_t off = 0;
    int in = arch_.input_dim;
    for (int l = 0; l < arch_.layers; ++l) {
      blocks_.push_back({off, in, arch_.hidden});
      off += static_cast<std::size_t>(in + 1) * arch_.hidden;
      in = arch_.hidden;
    }
    blocks_.push_back({off, arch_.hidden, arch_.hidden});
    off += static_cast<std::size_t>(arch_.hidden + 1) * arch_.hidden;
    blocks_.push_back({off, arch_.hidden, arch_.num_classes});
    off += static_cast<std::size_t>(arch_.hidden + 1) * arch_.num_classes;
    params_.assign(off, 0.0);
  }

  // Glorot-uniform weights, zero biases. `mp_gain` scales the range of the
  // message-passing layers only: sum aggregation over ~2k neighbours inflates
  // activations layer after layer, and unscaled weights start training with
  // logits in the hundreds.
  static GnnModel initialized(const Architecture& arch, std::uint64_t seed, double mp_gain = 1.0) {
    GnnModel m(arch);
    Rng rng = make_stream(seed, {0x696e6974ULL});
    for (std::size_t bi = 0; bi < m.blocks_.size(); ++bi) {
      const Block& b = m.blocks_[bi];
      const double gain = bi < static_cast<std::size_t>(arch.layers) ? mp_gain : 1.0;
      const double lim = gain * std::sqrt(6.0 / (b.in + b.out));
      std::uniform_real_distribution<double> u(-lim, lim);
      for (std::size_t i = 0; i < static_cast<std::size_t>(b.in * b.out); ++i)
        m.params_[b.offset + i] = u(rng);
    }
    return m;
  }

  const Architecture& arch() const { return arch_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t num_params() const { return params_.size(); }

  void set_params(std::vector<double> p) {
    require(p.size() == params_.size(), ErrorKind::DimensionMismatch, "parameter count mismatch");
    for (double x : p) require(std::isfinite(x), ErrorKind::InvalidArgument, "non-finite parameter");
    params_ = std::move(p);
  }

  // Block b: 0..L-1 message-passing layers, L head hidden, L+1 head output.
  struct Block {
    std::size_t offset;
    int in;
    int out;
    std::size_t weight_size() const { return static_cast<std::size_t>(in) * out; }
    std::size_t bias_offset() const { return offset + weight_size(); }
  };
  const std::vector<Block>& blocks() const { return blocks_; }

  // Weight matrix of a block as a Matrix copy (in x out).
  Matrix weight(std::size_t b) const {
    const Block& blk = blocks_[b];
    Matrix w(blk.in, blk.out);
    std::copy_n(params_.begin() + blk.offset, blk.weight_size(), w.data().begin());
    return w;
  }
  // Row i of a block's weight matrix (the out-weights of input unit i).
  std::span<const double> weight_row(std::size_t b, std::size_t i) const {
    const Block& blk = blocks_[b];
    return {params_.data() + blk.offset + i * blk.out, static_cast<std::size_t>(blk.out)};
  }
  const double* weight_data(std::size_t b) const { return params_.data() + blocks_[b].offset; }
  // Transposed weight matrix (out x in).
  Matrix weight_transposed(std::size_t b) const {
    const Block& blk = blocks_[b];
    Matrix w(blk.out, blk.in);
    for (int i = 0; i < blk.in; ++i)
      for (int o = 0; o < blk.out; ++o) w(o, i) = params_[blk.offset + static_cast<std::size_t>(i) * blk.out + o];
    return w;
  }
  std::span<const double> bias(std::size_t b) const {
    const Block& blk = blocks_[b];
    return {params_.data() + blk.bias_offset(), static_cast<std::size_t>(blk.out)};
  }

  friend bool operator==(const GnnModel& a, const GnnModel& b) {
    return a.arch_ == b.arch_ && a.params_ == b.params_;
  }

 private:
  Architecture arch_;
  std::vector<Block> blocks_;
  std::vector<double> params_;
};

// Everything the backward pass needs from a forward evaluation.
struct ForwardTrace {
  std::vector<double> mask;
  std::vector<Matrix> states;       // states[l] = input of layer l; states[L] = final node states
  std::vector<Matrix> projections;  // projections[l] = states[l] * W_l
  double mask_sum = 0.0;
  double denom = kReadoutFloor;
  std::vector<double> embedding;
  std::vector<double> head_pre;
  std::vector<double> head_hidden;
  std::vector<double> logits;
  std::vector<double> probs;
};

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += (p[i] = std::exp(logits[i] - mx));
  for (double& x : p) x /= s;
  return p;
}

namespace detail {

// out[v] = (1 + eps) m_v p[v] + sum_{u in N(v)} m_u p[u] + bias
inline Matrix aggregate(const CellGraph& g, const Matrix& p, std::span<const double> mask,
                        double eps, std::span<const double> bias) {
  const std::size_t n = g.num_nodes();
  Matrix out(n, p.cols());
  for (std::size_t v = 0; v < n; ++v) {
    auto o = out.row(v);
    std::copy(bias.begin(), bias.end(), o.begin());
    axpy((1.0 + eps) * mask[v], p.row(v), o);
    for (int u : g.neighbors(v))
      if (mask[u] != 0.0) axpy(mask[u], p.row(u), o);
  }
  return out;
}

// in * W_b using the model's parameter storage directly.
inline Matrix project(const Matrix& in, const GnnModel& model, std::size_t b) {
  Matrix out(in.rows(), static_cast<std::size_t>(model.blocks()[b].out));
  for (std::size_t r = 0; r < in.rows(); ++r) {
    row_times(in.row(r), model.weight_data(b), out.row(r));
  }
  return out;
}

inline void check_input(const GnnModel& model, const CellGraph& g,
                        const std::vector<double>* mask) {
  require(g.num_nodes() == 0 || g.feature_dim() == static_cast<std::size_t>(model.arch().input_dim),
          ErrorKind::DimensionMismatch,
          "graph feature width " + std::to_string(g.feature_dim()) + " does not match model input " +
              std::to_string(model.arch().input_dim));
  if (mask) {
    require(mask->size() == g.num_nodes(), ErrorKind::DimensionMismatch,
            "mask length does not match node count");
    for (double m : *mask)
      require(m >= 0.0 && m <= 1.0, ErrorKind::InvalidArgument, "mask entry outside [0, 1]");
  }
}

}  // namespace detail

// Runs the classifier on one graph. An absent mask means all ones; the empty
// graph yields a zero embedding.
inline ForwardTrace forward(const GnnModel& model, const CellGraph& g,
                            const std::vector<double>* mask = nullptr) {
  detail::check_input(model, g, mask);
  const auto& arch = model.arch();
  const std::size_t n = g.num_nodes();
  ForwardTrace t;
  t.mask = mask ? *mask : std::vector<double>(n, 1.0);

  t.states.reserve(arch.layers + 1);
  t.states.push_back(n ? g.features() : Matrix(0, arch.input_dim));
  for (int l = 0; l < arch.layers; ++l) {
    t.projections.push_back(detail::project(t.states[l], model, l));
    Matrix h = detail::aggregate(g, t.projections[l], t.mask, arch.epsilons[l], model.bias(l));
    for (double& x : h.data()) x = x > 0.0 ? x : 0.0;
    t.states.push_back(std::move(h));
  }

  const Matrix& last = t.states.back();
  t.embedding.assign(arch.hidden, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    t.mask_sum += t.mask[v];
    if (t.mask[v] != 0.0) axpy(t.mask[v], last.row(v), t.embedding);
  }
  t.denom = std::max(t.mask_sum, kReadoutFloor);
  for (double& x : t.embedding) x /= t.denom;

  const std::size_t L = static_cast<std::size_t>(arch.layers);
  t.head_pre.assign(model.bias(L).begin(), model.bias(L).end());
  row_times(t.embedding, model.weight_data(L), t.head_pre);
  t.head_hidden = t.head_pre;
  for (double& x : t.head_hidden) x = x > 0.0 ? x : 0.0;
  t.logits.assign(model.bias(L + 1).begin(), model.bias(L + 1).end());
  row_times(t.head_hidden, model.weight_data(L + 1), t.logits);
  t.probs = softmax(t.logits);
  return t;
}

struct Gradients {
  std::vector<double> params;
  std::vector<double> mask;
  // d loss / d final node states, row per node; used by Grad-CAM.
  Matrix final_states;
};

// Reverse-mode pass through a recorded forward trace. `d_logits` seeds the
// loss gradient on the logits; `d_embedding`, when given, adds a direct
// gradient on the readout embedding.
inline Gradients backward(const GnnModel& model, const CellGraph& g, const ForwardTrace& t,
                          std::span<const double> d_logits,
                          std::span<const double> d_embedding = {}) {
  const auto& arch = model.arch();
  const std::size_t n = g.num_nodes();
  const std::size_t L = static_cast<std::size_t>(arch.layers);
  const auto& blocks = model.blocks();
  require(d_logits.size() == static_cast<std::size_t>(arch.num_classes),
          ErrorKind::DimensionMismatch, "logit gradient length mismatch");
  require(d_embedding.empty() || d_embedding.size() == static_cast<std::size_t>(arch.hidden),
          ErrorKind::DimensionMismatch, "embedding gradient length mismatch");

  Gradients gr;
  gr.params.assign(model.num_params(), 0.0);
  gr.mask.assign(n, 0.0);
  auto& dp = gr.params;

  // Output layer.
  const auto& out_blk = blocks[L + 1];
  for (int i = 0; i < out_blk.in; ++i)
    for (int c = 0; c < out_blk.out; ++c)
      dp[out_blk.offset + static_cast<std::size_t>(i) * out_blk.out + c] += t.head_hidden[i] * d_logits[c];
  for (int c = 0; c < out_blk.out; ++c) dp[out_blk.bias_offset() + c] += d_logits[c];
  std::vector<double> d_hidden(arch.hidden, 0.0);
  for (int i = 0; i < arch.hidden; ++i)
    d_hidden[i] = t.head_pre[i] > 0.0 ? dot(model.weight_row(L + 1, i), d_logits) : 0.0;

  // Head hidden layer.
  const auto& hid_blk = blocks[L];
  for (int i = 0; i < hid_blk.in; ++i)
    for (int j = 0; j < hid_blk.out; ++j)
      dp[hid_blk.offset + static_cast<std::size_t>(i) * hid_blk.out + j] += t.embedding[i] * d_hidden[j];
  for (int j = 0; j < hid_blk.out; ++j) dp[hid_blk.bias_offset() + j] += d_hidden[j];
  std::vector<double> d_emb(arch.hidden, 0.0);
  for (int i = 0; i < arch.hidden; ++i) d_emb[i] = dot(model.weight_row(L, i), d_hidden);
  if (!d_embedding.empty())
    for (int i = 0; i < arch.hidden; ++i) d_emb[i] += d_embedding[i];

  // Masked mean readout.
  Matrix d_state(n, arch.hidden);
  const bool floor_active = t.mask_sum <= kReadoutFloor;
  const double emb_term = floor_active ? 0.0 : dot(d_emb, t.embedding);
  for (std::size_t v = 0; v < n; ++v) {
    auto row = d_state.row(v);
    for (int i = 0; i < arch.hidden; ++i) row[i] = t.mask[v] * d_emb[i] / t.denom;
    gr.mask[v] += (dot(d_emb, t.states[L].row(v)) - emb_term) / t.denom;
  }
  gr.final_states = d_state;

  // Message-passing layers, last to first.
  for (std::size_t l = L; l-- > 0;) {
    const auto& blk = blocks[l];
    const double eps = arch.epsilons[l];
    Matrix d_pre = d_state;
    for (std::size_t i = 0; i < d_pre.size(); ++i)
      if (!(t.states[l + 1].data()[i] > 0.0)) d_pre.data()[i] = 0.0;

    for (std::size_t v = 0; v < n; ++v)
      axpy(1.0, d_pre.row(v), std::span<double>(dp.data() + blk.bias_offset(), blk.out));

    // d_proj[v] = m_v ((1 + eps) d_pre[v] + sum_{u in N(v)} d_pre[u])
    Matrix d_proj(n, blk.out);
    for (std::size_t v = 0; v < n; ++v) {
      auto row = d_proj.row(v);
      axpy(1.0 + eps, d_pre.row(v), row);
      for (int u : g.neighbors(v)) axpy(1.0, d_pre.row(u), row);
      gr.mask[v] += dot(row, t.projections[l].row(v));
      for (double& x : row) x *= t.mask[v];
    }

    const Matrix& in = t.states[l];
    for (std::size_t v = 0; v < n; ++v) {
      auto x = in.row(v);
      for (int i = 0; i < blk.in; ++i)
        if (x[i] != 0.0)
          axpy(x[i], d_proj.row(v),
               std::span<double>(dp.data() + blk.offset + static_cast<std::size_t>(i) * blk.out, blk.out));
    }
    if (l > 0) d_state = matmul(d_proj, model.weight_transposed(l));
  }
  return gr;
}

// Cross-entropy of the softmax against class `target`, and its logit gradient.
inline double cross_entropy(const ForwardTrace& t, int target, std::vector<double>* d_logits) {
  const double p = std::max(t.probs[target], 1e-300);
  if (d_logits) {
    *d_logits = t.probs;
    (*d_logits)[target] -= 1.0;
  }
  return -std::log(p);
}

inline int argmax(std::span<const double> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

struct Prediction {
  int label = 0;
  std::vector<double> probs;
};

inline Prediction predict(const GnnModel& model, const CellGraph& g,
                          const std::vector<double>* mask = nullptr) {
  ForwardTrace t = forward(model, g, mask);
  return {argmax(t.logits), std::move(t.probs)};
}

// Prediction on the subgraph of nodes with keep[v] set, without building it.
// Equal bit for bit to predict(remove_nodes(g, dropped)) and to predict with
// the matching 0/1 mask; dropped rows are never computed.
inline Prediction predict_kept(const GnnModel& model, const CellGraph& g, const std::vector<char>& keep) {
  const auto& arch = model.arch();
  const std::size_t n = g.num_nodes();
  require(keep.size() == n, ErrorKind::DimensionMismatch, "keep flags do not match node count");
  require(n == 0 || g.feature_dim() == static_cast<std::size_t>(arch.input_dim), ErrorKind::DimensionMismatch,
          "graph feature width does not match model input");
  const std::size_t L = static_cast<std::size_t>(arch.layers);
  std::vector<int> kept, pos(n, -1);
  for (std::size_t v = 0; v < n; ++v)
    if (keep[v]) {
      pos[v] = static_cast<int>(kept.size());
      kept.push_back(static_cast<int>(v));
    }
  const std::size_t c = kept.size(), w = static_cast<std::size_t>(arch.hidden);
  Matrix state(c, w), proj(c, w);
  for (std::size_t l = 0; l < L; ++l) {
    std::fill(proj.data().begin(), proj.data().end(), 0.0);
    for (std::size_t r = 0; r < c; ++r)
      row_times(l == 0 ? g.features().row(kept[r]) : state.row(r), model.weight_data(l), proj.row(r));
    const auto bias = model.bias(l);
    for (std::size_t r = 0; r < c; ++r) {
      auto o = state.row(r);
      std::copy(bias.begin(), bias.end(), o.begin());
      axpy(1.0 + arch.epsilons[l], proj.row(r), o);
      for (int u : g.neighbors(kept[r]))
        if (pos[u] >= 0) axpy(1.0, proj.row(pos[u]), o);
      for (double& x : o) x = x > 0.0 ? x : 0.0;
    }
  }
  std::vector<double> emb(w, 0.0);
  double count = 0.0;
  for (std::size_t r = 0; r < c; ++r) {
    count += 1.0;
    axpy(1.0, state.row(r), emb);
  }
  const double denom = std::max(count, kReadoutFloor);
  for (double& x : emb) x /= denom;
  std::vector<double> hidden(model.bias(L).begin(), model.bias(L).end());
  row_times(emb, model.weight_data(L), hidden);
  for (double& x : hidden) x = x > 0.0 ? x : 0.0;
  std::vector<double> logits(model.bias(L + 1).begin(), model.bias(L + 1).end());
  row_times(hidden, model.weight_data(L + 1), logits);
  return {argmax(logits), softmax(logits)};
}

}  // namespace ksx
