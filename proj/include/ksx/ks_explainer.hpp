#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ksx/error.hpp"
#include "ksx/graph.hpp"
#include "ksx/importance.hpp"
#include "ksx/ks_bench.hpp"
#include "ksx/model.hpp"
#include "ksx/parallel.hpp"
#include "ksx/rng.hpp"
#include "ksx/train.hpp"

namespace ksx {

// Node-mask optimisation settings shared by the per-graph explainer and the
// batch explainer.
struct MaskOptConfig {
  int iterations = 300;
  double learning_rate = 0.01;
  double size_penalty = 0.005;
  double entropy_penalty = 0.1;
  double init_logit = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(iterations >= 1, ErrorKind::Config, "mask iterations must be at least 1");
    require(learning_rate > 0.0, ErrorKind::Config, "mask learning rate must be positive");
    require(size_penalty >= 0.0 && entropy_penalty >= 0.0, ErrorKind::Config,
            "mask penalties must be non-negative");
    require(std::isfinite(init_logit), ErrorKind::Config, "init logit must be finite");
  }
};

enum class KsMode { SoftConfidence, BinaryLabel };

struct BatchExplainConfig {
  double lambda_similarity = 0.5;  // lambda_1
  double lambda_ks_sum = 1.0;      // lambda_2
  double lambda_ks_var = 0.5;      // lambda_3
  MaskOptConfig mask;
  int samples = 4;
  KsMode ks_mode = KsMode::SoftConfidence;
  std::vector<double> schedule = removal_grid();
  int max_batch = 64;
  // Key the sampling streams by (iteration, sample) only, so every graph in
  // the batch draws the same uniforms.
  bool shared_graph_streams = false;

  bool uses_ks() const { return lambda_ks_sum != 0.0 || lambda_ks_var != 0.0; }

  void validate() const {
    mask.validate();
    for (double l : {lambda_similarity, lambda_ks_sum, lambda_ks_var})
      require(std::isfinite(l) && l >= 0.0, ErrorKind::Config, "lambdas must be finite and non-negative");
    require(samples >= 1, ErrorKind::Config, "sample count must be at least 1");
    require(max_batch >= 1, ErrorKind::Config, "max batch must be at least 1");
    require(!schedule.empty(), ErrorKind::Config, "removal schedule must not be empty");
    for (double f : schedule) require(f >= 0.0 && f <= 1.0, ErrorKind::Config, "schedule fraction outside [0, 1]");
  }
};

// ---------------------------------------------------------------------------
// Objective terms

inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

// Sum of cosine similarities over unordered pairs.
inline double pairwise_similarity(const std::vector<std::vector<double>>& embeddings) {
  double s = 0.0;
  for (std::size_t i = 0; i < embeddings.size(); ++i)
    for (std::size_t j = i + 1; j < embeddings.size(); ++j) s += cosine(embeddings[i], embeddings[j]);
  return s;
}

// Gradient of pairwise_similarity with respect to each embedding.
inline std::vector<std::vector<double>> pairwise_similarity_grad(const std::vector<std::vector<double>>& e) {
  std::vector<std::vector<double>> g(e.size());
  std::vector<double> norm(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    g[i].assign(e[i].size(), 0.0);
    norm[i] = std::sqrt(dot(e[i], e[i]));
  }
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (norm[i] == 0.0) continue;
    for (std::size_t j = 0; j < e.size(); ++j) {
      if (j == i || norm[j] == 0.0) continue;
      const double c = dot(e[i], e[j]) / (norm[i] * norm[j]);
      // d cos / d e_i = e_j / (|e_i||e_j|) - cos e_i / |e_i|^2
      axpy(1.0 / (norm[i] * norm[j]), e[j], g[i]);
      axpy(-c / (norm[i] * norm[i]), e[i], g[i]);
    }
  }
  return g;
}

inline double population_variance(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size());
}

// Per-graph KS value for a node mask. Nodes are ranked by mask value; for
// every schedule fraction the top (most) or bottom (least) nodes are removed.
//   soft:   C_dir(j) = max_{j' <= j} (1 - p(y_orig | removal at j'))
//           ks = clamp(max_j C_most(j) - C_least(j), 0, 1)
//   binary: C_dir(j) = 1 once the predicted label has changed
//           ks = max_j |C_most(j) - C_least(j)|
inline double ks_per_graph(const GnnModel& model, const CellGraph& g, const std::vector<double>& mask,
                           const std::vector<double>& schedule, KsMode mode, int original = -1) {
  require(g.num_nodes() > 0, ErrorKind::InvalidArgument, "KS value undefined for the empty graph");
  require(mask.size() == g.num_nodes(), ErrorKind::DimensionMismatch, "mask length does not match node count");
  if (original < 0) original = predict(model, g).label;
  const auto most = rank_nodes(mask, Direction::Most);
  const auto least = rank_nodes(mask, Direction::Least);

  std::vector<char> keep(g.num_nodes());
  auto evaluate = [&](const std::vector<int>& order, std::size_t count) {
    std::fill(keep.begin(), keep.end(), 1);
    for (std::size_t r = 0; r < count; ++r) keep[order[r]] = 0;
    return predict_kept(model, g, keep);
  };

  double c_most = 0.0, c_least = 0.0, ks = 0.0;
  bool any_most = false, any_least = false;
  std::optional<Prediction> full, empty;
  for (double f : schedule) {
    const std::size_t count = fraction_count(f, g.num_nodes());
    Prediction pm, pl;
    if (count == 0) {
      if (!full) full = evaluate(most, 0);
      pm = pl = *full;
    } else if (count == g.num_nodes()) {
      if (!empty) empty = evaluate(most, count);
      pm = pl = *empty;
    } else {
      pm = evaluate(most, count);
      pl = evaluate(least, count);
    }
    if (mode == KsMode::SoftConfidence) {
      c_most = std::max(c_most, 1.0 - pm.probs[original]);
      c_least = std::max(c_least, 1.0 - pl.probs[original]);
      ks = std::max(ks, c_most - c_least);
    } else {
      any_most = any_most || pm.label != original;
      any_least = any_least || pl.label != original;
      ks = std::max(ks, std::abs(double(any_most) - double(any_least)));
    }
  }
  return std::clamp(ks, 0.0, 1.0);
}

struct ObjectiveTerms {
  double mi = 0.0;
  double similarity = 0.0;
  double ks_sum = 0.0;
  double ks_var = 0.0;
  double total = 0.0;
};

struct ObjectiveDetail {
  ObjectiveTerms terms;
  std::vector<double> ks;
  std::vector<ForwardTrace> traces;
};

namespace detail {

inline ObjectiveDetail evaluate_objective(const GnnModel& model, const std::vector<CellGraph>& graphs,
                                          const std::vector<std::vector<double>>& masks,
                                          const std::vector<int>& originals, const BatchExplainConfig& cfg) {
  const std::size_t k = graphs.size();
  ObjectiveDetail d;
  d.traces.resize(k);
  d.ks.assign(k, 0.0);
  std::vector<double> ce(k, 0.0);
  const bool with_ks = cfg.uses_ks();
  parallel_for(k, [&](std::size_t i) {
    d.traces[i] = forward(model, graphs[i], &masks[i]);
    ce[i] = cross_entropy(d.traces[i], originals[i], nullptr);
    if (with_ks) d.ks[i] = ks_per_graph(model, graphs[i], masks[i], cfg.schedule, cfg.ks_mode, originals[i]);
  });
  std::vector<std::vector<double>> emb(k);
  for (std::size_t i = 0; i < k; ++i) {
    d.terms.mi -= ce[i];
    emb[i] = d.traces[i].embedding;
  }
  d.terms.similarity = cfg.lambda_similarity * pairwise_similarity(emb);
  double ks_sum = 0.0;
  for (double x : d.ks) ks_sum += x;
  d.terms.ks_sum = cfg.lambda_ks_sum * ks_sum;
  d.terms.ks_var = cfg.lambda_ks_var * population_variance(d.ks);
  d.terms.total = d.terms.mi + d.terms.similarity + d.terms.ks_sum - d.terms.ks_var;
  return d;
}

inline std::vector<int> original_predictions(const GnnModel& model, const std::vector<CellGraph>& graphs) {
  std::vector<int> out(graphs.size());
  parallel_for(graphs.size(), [&](std::size_t i) { out[i] = predict(model, graphs[i]).label; });
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

// The four weighted objective terms for fixed soft masks. ks values are only
// computed when a KS weight is non-zero; otherwise both KS terms are zero.
inline ObjectiveTerms objective_eval(const GnnModel& model, const std::vector<CellGraph>& graphs,
                                     const std::vector<std::vector<double>>& masks, const BatchExplainConfig& cfg) {
  require(masks.size() == graphs.size(), ErrorKind::InvalidArgument, "one mask per graph required");
  return detail::evaluate_objective(model, graphs, masks, detail::original_predictions(model, graphs), cfg).terms;
}

// ---------------------------------------------------------------------------
// Score-function (likelihood-ratio) gradient

// Likelihood-ratio estimate of d E[R(x)] / d logits for independent
// x_v ~ Bernoulli(p_v):  (1/S) sum_s (R_s - baseline) (x_s - p).
inline std::vector<double> score_function_estimate(const std::vector<double>& probs,
                                                   const std::vector<std::vector<double>>& samples,
                                                   const std::vector<double>& rewards, double baseline) {
  std::vector<double> grad(probs.size(), 0.0);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const double adv = rewards[s] - baseline;
    for (std::size_t v = 0; v < probs.size(); ++v) grad[v] += adv * (samples[s][v] - probs[v]);
  }
  for (double& g : grad) g /= static_cast<double>(samples.size());
  return grad;
}

inline void sample_bernoulli(const std::vector<double>& probs, std::size_t begin, std::size_t end, Rng& rng,
                             std::vector<double>& out) {
  for (std::size_t v = begin; v < end; ++v) out[v] = uniform01(rng) < probs[v] ? 1.0 : 0.0;
}

// ---------------------------------------------------------------------------
// Batch explanation

struct BatchExplanation {
  std::vector<std::vector<double>> masks;
  std::vector<NodeImportanceMap> maps;
  std::vector<ObjectiveTerms> trace;
  std::vector<double> ks;
  int best_iteration = 0;
};

// Jointly optimises one mask per graph. Each iteration evaluates the
// objective at the current soft masks (recorded in the trace), then takes one
// Adam step on the mask logits: exact gradients for the cross-entropy and
// similarity terms plus size / entropy regularisers, and a score-function
// estimate for the KS terms from Bernoulli samples of the masks. The masks of
// the iteration with the highest total are returned.
inline BatchExplanation explain_batch(const GnnModel& model, const std::vector<CellGraph>& graphs,
                                      const BatchExplainConfig& cfg, const std::string& method = "ks-gnnexplainer") {
  cfg.validate();
  require(!graphs.empty(), ErrorKind::InvalidArgument, "empty batch");
  for (const auto& g : graphs) {
    require(g.label() == graphs.front().label(), ErrorKind::InvalidArgument, "batch mixes labels");
    require(g.num_nodes() > 0, ErrorKind::InvalidArgument, "cannot explain the empty graph '" + g.id() + "'");
  }
  const std::size_t k = graphs.size();
  const auto originals = detail::original_predictions(model, graphs);
  const auto& mc = cfg.mask;

  std::vector<std::size_t> offset(k + 1, 0);
  for (std::size_t i = 0; i < k; ++i) offset[i + 1] = offset[i] + graphs[i].num_nodes();
  std::vector<double> theta(offset[k], mc.init_logit);
  Adam opt(theta.size(), mc.learning_rate);

  BatchExplanation out;
  double best_total = -std::numeric_limits<double>::infinity();
  std::vector<double> baseline(k, 0.0);
  long rewards_seen = 0;
  std::vector<std::vector<double>> masks(k);

  for (int it = 0; it < mc.iterations; ++it) {
    for (std::size_t i = 0; i < k; ++i) {
      masks[i].resize(graphs[i].num_nodes());
      for (std::size_t v = 0; v < masks[i].size(); ++v) masks[i][v] = detail::sigmoid(theta[offset[i] + v]);
    }
    ObjectiveDetail obj = detail::evaluate_objective(model, graphs, masks, originals, cfg);
    out.trace.push_back(obj.terms);
    if (obj.terms.total > best_total) {
      best_total = obj.terms.total;
      out.best_iteration = it;
      out.masks = masks;
      out.ks = obj.ks;
    }
    if (it + 1 == mc.iterations) break;

    // Loss gradient (minimisation) with respect to the mask logits.
    std::vector<double> grad(theta.size(), 0.0);
    std::vector<std::vector<double>> d_emb(k);
    if (cfg.lambda_similarity != 0.0 && k > 1) {
      std::vector<std::vector<double>> emb(k);
      for (std::size_t i = 0; i < k; ++i) emb[i] = obj.traces[i].embedding;
      d_emb = pairwise_similarity_grad(emb);
      for (auto& row : d_emb)
        for (double& x : row) x *= -cfg.lambda_similarity;
    }
    parallel_for(k, [&](std::size_t i) {
      std::vector<double> d_logits = obj.traces[i].probs;
      d_logits[originals[i]] -= 1.0;
      Gradients gr = backward(model, graphs[i], obj.traces[i], d_logits, d_emb[i]);
      for (std::size_t v = 0; v < masks[i].size(); ++v) {
        const double s = masks[i][v];
        const double ds = s * (1.0 - s);
        const double sc = std::clamp(s, 1e-12, 1.0 - 1e-12);
        const double entropy_grad = std::log((1.0 - sc) / sc);
        grad[offset[i] + v] = (gr.mask[v] + mc.size_penalty + mc.entropy_penalty * entropy_grad) * ds;
      }
    });

    if (cfg.uses_ks()) {
      // Bernoulli samples of every mask, one joint sample per s.
      std::vector<double> probs(theta.size());
      for (std::size_t v = 0; v < theta.size(); ++v) probs[v] = detail::sigmoid(theta[v]);
      std::vector<std::vector<double>> sampled(cfg.samples, std::vector<double>(theta.size()));
      std::vector<std::vector<double>> sample_ks(cfg.samples, std::vector<double>(k));
      for (int s = 0; s < cfg.samples; ++s)
        for (std::size_t i = 0; i < k; ++i) {
          const auto key_it = static_cast<std::uint64_t>(it), key_s = static_cast<std::uint64_t>(s);
          Rng rng = cfg.shared_graph_streams ? make_stream(mc.seed, {key_it, key_s})
                                             : make_stream(mc.seed, {static_cast<std::uint64_t>(i), key_it, key_s});
          sample_bernoulli(probs, offset[i], offset[i + 1], rng, sampled[s]);
        }
      parallel_for(static_cast<std::size_t>(cfg.samples) * k, [&](std::size_t job) {
        const std::size_t s = job / k, i = job % k;
        std::vector<double> hard(sampled[s].begin() + offset[i], sampled[s].begin() + offset[i + 1]);
        sample_ks[s][i] = ks_per_graph(model, graphs[i], hard, cfg.schedule, cfg.ks_mode, originals[i]);
      });
      std::vector<double> variance(cfg.samples);
      for (int s = 0; s < cfg.samples; ++s) variance[s] = population_variance(sample_ks[s]);

      // Graph i's mask only moves ks_i and the variance, so its logits are
      // credited with lambda_2 ks_i - lambda_3 Var(ks). The other graphs' KS
      // values are independent of its samples and would only add noise.
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t n = offset[i + 1] - offset[i];
        const std::vector<double> p(probs.begin() + offset[i], probs.begin() + offset[i + 1]);
        std::vector<std::vector<double>> x(cfg.samples);
        std::vector<double> rewards(cfg.samples);
        for (int s = 0; s < cfg.samples; ++s) {
          x[s].assign(sampled[s].begin() + offset[i], sampled[s].begin() + offset[i + 1]);
          rewards[s] = cfg.lambda_ks_sum * sample_ks[s][i] - cfg.lambda_ks_var * variance[s];
        }
        const auto ascent = score_function_estimate(p, x, rewards, baseline[i]);
        for (std::size_t v = 0; v < n; ++v) grad[offset[i] + v] -= ascent[v];
        long seen = rewards_seen;
        for (double r : rewards) baseline[i] += (r - baseline[i]) / static_cast<double>(++seen);
      }
      rewards_seen += cfg.samples;
    }
    opt.step(theta, grad);
  }

  for (std::size_t i = 0; i < k; ++i) out.maps.push_back(make_map(graphs[i].id(), method, out.masks[i]));
  return out;
}

// Splits graphs into same-label batches of at most cfg.max_batch graphs. The
// order within each class is a seeded shuffle; batches keep that order.
inline std::vector<std::vector<std::size_t>> same_label_batches(const std::vector<CellGraph>& graphs, int max_batch,
                                                                std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> batches;
  int max_label = -1;
  for (const auto& g : graphs) max_label = std::max(max_label, g.label());
  for (int c = 0; c <= max_label; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < graphs.size(); ++i)
      if (graphs[i].label() == c) members.push_back(i);
    if (members.empty()) continue;
    if (members.size() > static_cast<std::size_t>(max_batch)) {
      Rng rng = make_stream(seed, {0x6261746368ULL, static_cast<std::uint64_t>(c)});
      std::shuffle(members.begin(), members.end(), rng);
    }
    for (std::size_t b = 0; b < members.size(); b += max_batch)
      batches.emplace_back(members.begin() + b,
                           members.begin() + std::min(members.size(), b + static_cast<std::size_t>(max_batch)));
  }
  return batches;
}

// Explains every graph through same-label batches; maps come back in input
// order.
inline std::vector<NodeImportanceMap> explain_all_batched(const GnnModel& model, const std::vector<CellGraph>& graphs,
                                                          const BatchExplainConfig& cfg,
                                                          const std::string& method = "ks-gnnexplainer") {
  std::vector<NodeImportanceMap> maps(graphs.size());
  for (const auto& batch : same_label_batches(graphs, cfg.max_batch, cfg.mask.seed)) {
    std::vector<CellGraph> members;
    for (std::size_t i : batch) members.push_back(graphs[i]);
    BatchExplanation ex = explain_batch(model, members, cfg, method);
    for (std::size_t b = 0; b < batch.size(); ++b) maps[batch[b]] = std::move(ex.maps[b]);
  }
  return maps;
}

// ---------------------------------------------------------------------------
// Ablation over objective terms

struct AblationRow {
  std::string name;
  bool mi = true;
  bool similarity = false;
  bool ks_sum = false;
  bool ks_var = false;
  double fidelity = 0.0;
};

// Rows: full objective, MI only, MI + P, MI + P + KS sum, MI + KS sum + KS var.
inline std::vector<AblationRow> ablation_rows() {
  return {{"full", true, true, true, true},
          {"mi", true, false, false, false},
          {"mi+p", true, true, false, false},
          {"mi+p+ks_sum", true, true, true, false},
          {"mi+ks_sum+ks_var", true, false, true, true}};
}

inline BatchExplainConfig with_terms(BatchExplainConfig cfg, const AblationRow& row) {
  if (!row.similarity) cfg.lambda_similarity = 0.0;
  if (!row.ks_sum) cfg.lambda_ks_sum = 0.0;
  if (!row.ks_var) cfg.lambda_ks_var = 0.0;
  return cfg;
}

inline std::vector<AblationRow> ablate(const GnnModel& model, const std::vector<CellGraph>& graphs,
                                       const BatchExplainConfig& base, double threshold = 0.5,
                                       std::vector<AblationRow> rows = ablation_rows()) {
  for (auto& row : rows) {
    const auto maps = explain_all_batched(model, graphs, with_terms(base, row));
    row.fidelity = fidelity(model, graphs, maps, threshold);
  }
  return rows;
}

}  // namespace ksx
