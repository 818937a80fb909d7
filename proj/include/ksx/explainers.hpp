#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ksx/error.hpp"
#include "ksx/graph.hpp"
#include "ksx/importance.hpp"
#include "ksx/ks_explainer.hpp"
#include "ksx/model.hpp"
#include "ksx/rng.hpp"

namespace ksx {

inline const std::vector<std::string>& explainer_names() {
  static const std::vector<std::string> names = {"gnnexplainer", "gradcam", "gradcampp", "graphlrp",
                                                 "random", "oracle", "ks-gnnexplainer"};
  return names;
}

// Node-mask optimisation for one graph: minimises
//   -log p(y_orig | g, sigmoid(theta)) + alpha sum sigmoid(theta) + beta sum H(sigmoid(theta)).
// This is the batch explainer with every cross-graph weight at zero and a
// batch of one, so the two agree bit for bit.
inline NodeImportanceMap explain_gnnexplainer(const GnnModel& model, const CellGraph& g, const MaskOptConfig& cfg) {
  BatchExplainConfig bc;
  bc.lambda_similarity = bc.lambda_ks_sum = bc.lambda_ks_var = 0.0;
  bc.mask = cfg;
  bc.max_batch = 1;
  return std::move(explain_batch(model, {g}, bc, "gnnexplainer").maps.front());
}

namespace detail {

struct CamInputs {
  Matrix activations;  // final node states
  Matrix gradients;    // d y_c / d final node states
};

inline CamInputs cam_inputs(const GnnModel& model, const CellGraph& g) {
  require(g.num_nodes() > 0, ErrorKind::InvalidArgument, "cannot explain the empty graph '" + g.id() + "'");
  ForwardTrace t = forward(model, g);
  std::vector<double> seed(t.logits.size(), 0.0);
  seed[argmax(t.logits)] = 1.0;
  Gradients gr = backward(model, g, t, seed);
  return {t.states.back(), gr.final_states};
}

}  // namespace detail

// Grad-CAM on the final message-passing states: channel weights are the
// node-averaged gradients of the predicted logit.
inline NodeImportanceMap explain_gradcam(const GnnModel& model, const CellGraph& g) {
  const auto in = detail::cam_inputs(model, g);
  const std::size_t n = g.num_nodes(), w = in.activations.cols();
  std::vector<double> alpha(w, 0.0);
  for (std::size_t v = 0; v < n; ++v) axpy(1.0, in.gradients.row(v), alpha);
  for (double& a : alpha) a /= static_cast<double>(n);
  std::vector<double> raw(n);
  for (std::size_t v = 0; v < n; ++v) raw[v] = std::max(0.0, dot(alpha, in.activations.row(v)));
  return make_map(g.id(), "gradcam", raw);
}

// Grad-CAM++: per node-channel coefficients g^2 / (2 g^2 + sum_u A_u g^3)
// weight the positive gradients.
inline NodeImportanceMap explain_gradcampp(const GnnModel& model, const CellGraph& g) {
  const auto in = detail::cam_inputs(model, g);
  const std::size_t n = g.num_nodes(), w = in.activations.cols();
  std::vector<double> act_sum(w, 0.0);
  for (std::size_t v = 0; v < n; ++v) axpy(1.0, in.activations.row(v), act_sum);
  std::vector<double> weight(w, 0.0);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t k = 0; k < w; ++k) {
      const double gr = in.gradients(v, k);
      const double g2 = gr * gr;
      const double denom = 2.0 * g2 + act_sum[k] * g2 * gr;
      const double coeff = denom != 0.0 ? g2 / denom : 0.0;
      weight[k] += coeff * std::max(0.0, gr);
    }
  std::vector<double> raw(n);
  for (std::size_t v = 0; v < n; ++v) raw[v] = std::max(0.0, dot(weight, in.activations.row(v)));
  return make_map(g.id(), "gradcampp", raw);
}

// Epsilon-rule relevance for the predicted logit, propagated through the head,
// the readout and every message-passing layer down to the input features.
// Denominators exclude biases so that relevance is conserved up to the
// epsilon leakage. `layer_totals`, when given, receives the total relevance
// at each stage from the logit down to the nodes.
inline NodeImportanceMap explain_graphlrp(const GnnModel& model, const CellGraph& g, double eps = 1e-6,
                                          std::vector<double>* layer_totals = nullptr) {
  require(g.num_nodes() > 0, ErrorKind::InvalidArgument, "cannot explain the empty graph '" + g.id() + "'");
  const auto& arch = model.arch();
  const std::size_t n = g.num_nodes(), L = static_cast<std::size_t>(arch.layers), H = arch.hidden;
  ForwardTrace t = forward(model, g);
  const int c = argmax(t.logits);
  auto stab = [eps](double z) { return z + (z >= 0.0 ? eps : -eps); };
  auto total = [](std::span<const double> r) {
    double s = 0.0;
    for (double x : r) s += x;
    return s;
  };
  std::vector<double> totals;

  // Output logit -> head hidden units.
  const double y = t.logits[c];
  totals.push_back(y);
  const double z_out = y - model.bias(L + 1)[c];
  std::vector<double> r_hidden(H);
  for (std::size_t i = 0; i < H; ++i)
    r_hidden[i] = t.head_hidden[i] * model.weight_row(L + 1, i)[c] / stab(z_out) * y;
  totals.push_back(total(r_hidden));

  // Head hidden -> embedding (ReLU passes relevance through).
  std::vector<double> z_hidden(H);
  for (std::size_t j = 0; j < H; ++j) z_hidden[j] = t.head_pre[j] - model.bias(L)[j];
  std::vector<double> r_emb(H, 0.0);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < H; ++j)
      r_emb[i] += t.embedding[i] * model.weight_row(L, i)[j] / stab(z_hidden[j]) * r_hidden[j];
  totals.push_back(total(r_emb));

  // Readout: e_k = sum_v m_v h_vk / denom.
  Matrix r_state(n, H);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t k = 0; k < H; ++k)
      r_state(v, k) = t.mask[v] * t.states[L](v, k) / t.denom / stab(t.embedding[k]) * r_emb[k];
  totals.push_back(total(r_state.data()));

  // Message-passing layers.
  for (std::size_t l = L; l-- > 0;) {
    const double e = arch.epsilons[l];
    const auto bias = model.bias(l);
    const std::size_t out = r_state.cols();
    // s[v,k] = R[v,k] / z[v,k]
    Matrix s(n, out);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t k = 0; k < out; ++k) {
        const double pre = t.states[l + 1](v, k);
        // Dead units hold no relevance: their output is zero.
        s(v, k) = pre > 0.0 ? r_state(v, k) / stab(pre - bias[k]) : 0.0;
      }
    // tq[u] = (1 + eps) m_u s[u] + m_u sum_{v in N(u)} s[v]
    Matrix tq(n, out);
    for (std::size_t u = 0; u < n; ++u) {
      auto row = tq.row(u);
      axpy(1.0 + e, s.row(u), row);
      for (int v : g.neighbors(u)) axpy(1.0, s.row(v), row);
      for (double& x : row) x *= t.mask[u];
    }
    const Matrix& in = t.states[l];
    Matrix r_in(n, in.cols());
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t i = 0; i < in.cols(); ++i)
        r_in(u, i) = in(u, i) * dot(model.weight_row(l, i), tq.row(u));
    r_state = std::move(r_in);
    totals.push_back(total(r_state.data()));
  }

  std::vector<double> raw(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) raw[v] = total(r_state.row(v));
  if (layer_totals) *layer_totals = std::move(totals);
  return make_map(g.id(), "graphlrp", raw);
}

// Uniform random scores; a control with no information about the model.
inline NodeImportanceMap explain_random(const CellGraph& g, std::uint64_t seed) {
  Rng rng = make_stream(seed, {0x72616e64ULL, std::hash<std::string>{}(g.id())});
  std::vector<double> raw(g.num_nodes());
  for (double& x : raw) x = uniform01(rng);
  return make_map(g.id(), "random", raw);
}

// Ground-truth control: 1 for motif nodes, 0 otherwise.
inline NodeImportanceMap explain_oracle(const CellGraph& g, const std::vector<int>& truth) {
  require(truth.size() == g.num_nodes(), ErrorKind::DimensionMismatch, "ground truth length mismatch");
  std::vector<double> raw(truth.begin(), truth.end());
  for (double& x : raw) x = x != 0.0 ? 1.0 : 0.0;
  return make_map(g.id(), "oracle", raw);
}

}  // namespace ksx
