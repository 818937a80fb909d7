#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ksx/error.hpp"
#include "ksx/graph.hpp"
#include "ksx/importance.hpp"
#include "ksx/model.hpp"
#include "ksx/parallel.hpp"
#include "ksx/train.hpp"

namespace ksx {

// Removal fractions 0.00, 0.05, ..., 1.00.
inline constexpr int kGridSteps = 20;

inline std::vector<double> removal_grid() {
  std::vector<double> g(kGridSteps + 1);
  for (int j = 0; j <= kGridSteps; ++j) g[j] = static_cast<double>(j) / kGridSteps;
  return g;
}

// Sample value for graphs whose label never changes; lies beyond every grid
// fraction.
inline constexpr double kNeverChanged = 2.0;

// ---------------------------------------------------------------------------
// Two-sample Kolmogorov-Smirnov test

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  std::size_t m = 0;
};

// Kolmogorov survival function Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
// For small lambda the alternating series converges slowly, so the
// equivalent theta-function form 1 - sqrt(2 pi)/lambda sum exp(-(2k-1)^2 pi^2 / (8 lambda^2))
// is used there instead.
inline double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.6) {
    const double pi = 3.14159265358979323846;
    double s = 0.0;
    for (int k = 1; k < 100; ++k) {
      const double term = std::exp(-(2.0 * k - 1) * (2.0 * k - 1) * pi * pi / (8.0 * lambda * lambda));
      s += term;
      if (term < 1e-16) break;
    }
    return 1.0 - std::sqrt(2.0 * pi) / lambda * s;
  }
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k < 10000; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term < 1e-12) break;
    sign = -sign;
  }
  return 2.0 * sum;
}

// sup_x |F1(x) - F2(x)| over the merged sample points, plus the asymptotic
// p-value with the small-sample correction of the effective size.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), ErrorKind::InvalidArgument, "KS test needs non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
  // Track |i m - j n| in integers so D is the correctly rounded quotient.
  const long long ni = static_cast<long long>(a.size()), mi = static_cast<long long>(b.size());
  std::size_t i = 0, j = 0;
  long long best = 0;
  while (i < a.size() || j < b.size()) {
    double x;
    if (j == b.size() || (i < a.size() && a[i] <= b[j])) x = a[i];
    else x = b[j];
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    best = std::max(best, std::llabs(static_cast<long long>(i) * mi - static_cast<long long>(j) * ni));
  }
  const double d = static_cast<double>(best) / static_cast<double>(ni * mi);
  KsResult r;
  r.statistic = d;
  r.n = a.size();
  r.m = b.size();
  const double en = std::sqrt(n * m / (n + m));
  const double p = kolmogorov_q((en + 0.12 + 0.11 / en) * d);
  r.p_value = std::clamp(p, std::numeric_limits<double>::min(), 1.0);
  return r;
}

// ---------------------------------------------------------------------------
// Removal sweeps and ECDFs

struct GraphSweep {
  std::string graph_id;
  int original = 0;
  // Indexed [direction][grid step]; direction 0 = most, 1 = least.
  std::array<std::vector<int>, 2> labels;
  std::array<std::vector<double>, 2> original_prob;
};

struct RemovalSweep {
  std::vector<double> fractions;
  std::vector<GraphSweep> graphs;
};

namespace detail {
inline void check_maps(const std::vector<CellGraph>& graphs, const std::vector<NodeImportanceMap>& maps) {
  require(maps.size() == graphs.size(), ErrorKind::InvalidArgument,
          "expected one importance map per graph");
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    require(maps[i].graph_id == graphs[i].id(), ErrorKind::InvalidArgument,
            "missing importance map for graph '" + graphs[i].id() + "'");
    require(maps[i].scores.size() == graphs[i].num_nodes(), ErrorKind::DimensionMismatch,
            "importance map length mismatch for graph '" + graphs[i].id() + "'");
  }
}
}  // namespace detail

// Hard removal of the top-j most / least important nodes for every grid
// fraction j. Fraction 1 leaves the empty graph, which the classifier maps to
// its fixed empty-graph prediction.
inline GraphSweep sweep_graph(const GnnModel& model, const CellGraph& g, const std::vector<double>& scores) {
  GraphSweep s;
  s.graph_id = g.id();
  s.original = predict(model, g).label;
  const auto grid = removal_grid();
  for (int dir = 0; dir < 2; ++dir) {
    const auto order = rank_nodes(scores, dir == 0 ? Direction::Most : Direction::Least);
    for (double f : grid) {
      std::vector<int> victims(order.begin(), order.begin() + fraction_count(f, g.num_nodes()));
      Prediction p = predict(model, remove_nodes(g, victims));
      s.labels[dir].push_back(p.label);
      s.original_prob[dir].push_back(p.probs[s.original]);
    }
  }
  return s;
}

inline RemovalSweep sweep_removal(const GnnModel& model, const std::vector<CellGraph>& graphs,
                                  const std::vector<NodeImportanceMap>& maps) {
  detail::check_maps(graphs, maps);
  RemovalSweep sw;
  sw.fractions = removal_grid();
  sw.graphs.resize(graphs.size());
  parallel_for(graphs.size(), [&](std::size_t i) { sw.graphs[i] = sweep_graph(model, graphs[i], maps[i].scores); });
  return sw;
}

struct EcdfPair {
  std::vector<double> fractions;
  std::vector<double> most;
  std::vector<double> least;
  // First grid fraction at which the label differs from the original, or
  // kNeverChanged.
  std::vector<double> first_change_most;
  std::vector<double> first_change_least;
  // Graph counts behind most / least.
  std::vector<std::size_t> count_most;
  std::vector<std::size_t> count_least;
};

inline double first_change(const std::vector<int>& labels, int original, const std::vector<double>& fractions) {
  for (std::size_t j = 0; j < labels.size(); ++j)
    if (labels[j] != original) return fractions[j];
  return kNeverChanged;
}

inline EcdfPair ecdf_pair(const RemovalSweep& sw) {
  EcdfPair e;
  e.fractions = sw.fractions;
  const std::size_t steps = sw.fractions.size();
  std::vector<std::size_t> cm(steps, 0), cl(steps, 0);
  for (const auto& g : sw.graphs) {
    e.first_change_most.push_back(first_change(g.labels[0], g.original, sw.fractions));
    e.first_change_least.push_back(first_change(g.labels[1], g.original, sw.fractions));
    for (std::size_t j = 0; j < steps; ++j) {
      cm[j] += e.first_change_most.back() <= sw.fractions[j];
      cl[j] += e.first_change_least.back() <= sw.fractions[j];
    }
  }
  const double n = static_cast<double>(sw.graphs.size());
  for (std::size_t j = 0; j < steps; ++j) {
    e.most.push_back(n > 0 ? static_cast<double>(cm[j]) / n : 0.0);
    e.least.push_back(n > 0 ? static_cast<double>(cl[j]) / n : 0.0);
  }
  e.count_most = std::move(cm);
  e.count_least = std::move(cl);
  return e;
}

// sup_j |F_most(j) - F_least(j)| over the grid.
inline double grid_statistic(const EcdfPair& e) {
  const std::size_t n = e.first_change_most.size();
  if (n == 0) return 0.0;
  std::size_t best = 0;
  for (std::size_t j = 0; j < e.count_most.size(); ++j) {
    const std::size_t a = e.count_most[j], b = e.count_least[j];
    best = std::max(best, a > b ? a - b : b - a);
  }
  return static_cast<double>(best) / static_cast<double>(n);
}

struct KsReport {
  std::string explainer;
  KsResult ks;
  EcdfPair ecdf;
};

inline KsReport ks_bench(const std::string& explainer, const GnnModel& model,
                         const std::vector<CellGraph>& graphs, const std::vector<NodeImportanceMap>& maps) {
  require(!graphs.empty(), ErrorKind::InvalidArgument, "no graphs to benchmark");
  KsReport r;
  r.explainer = explainer;
  r.ecdf = ecdf_pair(sweep_removal(model, graphs, maps));
  r.ks = ks_two_sample(r.ecdf.first_change_most, r.ecdf.first_change_least);
  return r;
}

// ---------------------------------------------------------------------------
// Fidelity

// Mean over graphs of 1(prediction correct) - 1(prediction correct after
// removing every node whose score is at least `threshold`).
inline double fidelity(const GnnModel& model, const std::vector<CellGraph>& graphs,
                       const std::vector<NodeImportanceMap>& maps, double threshold) {
  detail::check_maps(graphs, maps);
  if (graphs.empty()) return 0.0;
  std::vector<int> delta(graphs.size(), 0);
  parallel_for(graphs.size(), [&](std::size_t i) {
    const CellGraph& g = graphs[i];
    std::vector<int> victims;
    for (std::size_t v = 0; v < g.num_nodes(); ++v)
      if (maps[i].scores[v] >= threshold) victims.push_back(static_cast<int>(v));
    const int before = predict(model, g).label == g.label();
    const int after = victims.empty() ? before : predict(model, remove_nodes(g, victims)).label == g.label();
    delta[i] = before - after;
  });
  long sum = 0;
  for (int d : delta) sum += d;
  return static_cast<double>(sum) / static_cast<double>(graphs.size());
}

inline std::vector<std::pair<double, double>> fidelity_curve(const GnnModel& model, const std::vector<CellGraph>& graphs,
                                                             const std::vector<NodeImportanceMap>& maps) {
  std::vector<std::pair<double, double>> curve;
  for (double t : removal_grid()) curve.emplace_back(t, fidelity(model, graphs, maps, t));
  return curve;
}

// ---------------------------------------------------------------------------
// Tumour / non-tumour node classification from importance scores

struct NucleiF1 {
  double tumor = 0.0;
  double non_tumor = 0.0;
  double macro = 0.0;
};

inline double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double denom = 2.0 * tp + fp + fn;
  return denom > 0 ? 2.0 * tp / denom : 0.0;
}

// Nodes scoring >= 0.5 are called tumour; counts are pooled over all graphs.
inline NucleiF1 nuclei_f1(const std::vector<NodeImportanceMap>& maps, const std::vector<std::vector<int>>& truth) {
  require(maps.size() == truth.size(), ErrorKind::InvalidArgument, "one ground-truth vector per map required");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    require(maps[i].scores.size() == truth[i].size(), ErrorKind::DimensionMismatch,
            "ground truth length mismatch for graph '" + maps[i].graph_id + "'");
    for (std::size_t v = 0; v < truth[i].size(); ++v) {
      const bool pred = maps[i].scores[v] >= 0.5;
      const bool gt = truth[i][v] != 0;
      tp += pred && gt;
      fp += pred && !gt;
      fn += !pred && gt;
      tn += !pred && !gt;
    }
  }
  NucleiF1 r;
  r.tumor = f1_score(tp, fp, fn);
  r.non_tumor = f1_score(tn, fn, fp);
  r.macro = 0.5 * (r.tumor + r.non_tumor);
  return r;
}

// ---------------------------------------------------------------------------
// Importance-flag retraining

struct ClassAccuracies {
  std::vector<double> baseline;
  std::vector<double> augmented;
};

inline std::vector<double> per_class_accuracy(const GnnModel& model, const Dataset& ds, Split split) {
  std::vector<std::size_t> hit(ds.num_classes, 0), total(ds.num_classes, 0);
  for (std::size_t i : ds.indices(split)) {
    const int y = ds.graphs[i].label();
    ++total[y];
    hit[y] += predict(model, ds.graphs[i]).label == y;
  }
  std::vector<double> acc(ds.num_classes, 0.0);
  for (int c = 0; c < ds.num_classes; ++c)
    acc[c] = total[c] ? static_cast<double>(hit[c]) / static_cast<double>(total[c]) : 0.0;
  return acc;
}

// Appends one feature per node: 1 when the node is among the top
// `flag_fraction` most important nodes of its graph.
inline Dataset augment_with_flags(const Dataset& ds, const std::vector<NodeImportanceMap>& maps, double flag_fraction) {
  detail::check_maps(ds.graphs, maps);
  Dataset out = ds;
  for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
    const CellGraph& g = ds.graphs[i];
    const auto flagged = top_fraction_nodes(maps[i].scores, flag_fraction, Direction::Most);
    Matrix f(g.num_nodes(), g.feature_dim() + 1);
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
      auto src = g.features().row(v);
      std::copy(src.begin(), src.end(), f.row(v).begin());
    }
    for (int v : flagged) f(v, g.feature_dim()) = 1.0;
    out.graphs[i] = CellGraph(g.id(), g.coords(), std::move(f), g.edges(), g.label());
  }
  return out;
}

// Per-class test accuracy of a model trained from scratch on the flag-augmented
// dataset.
inline std::vector<double> retrain_with_flags(const Architecture& arch, const Dataset& ds,
                                              const std::vector<NodeImportanceMap>& maps, const TrainConfig& cfg,
                                              double flag_fraction = 0.30) {
  Architecture aug_arch = arch;
  aug_arch.input_dim = arch.input_dim + 1;
  const Dataset aug = augment_with_flags(ds, maps, flag_fraction);
  return per_class_accuracy(train(aug_arch, aug, cfg).model, aug, Split::Test);
}

inline ClassAccuracies augment_and_retrain(const Architecture& arch, const Dataset& ds,
                                           const std::vector<NodeImportanceMap>& maps, const TrainConfig& cfg,
                                           double flag_fraction = 0.30) {
  ClassAccuracies r;
  r.baseline = per_class_accuracy(train(arch, ds, cfg).model, ds, Split::Test);
  r.augmented = retrain_with_flags(arch, ds, maps, cfg, flag_fraction);
  return r;
}

// Graphs of one split, in dataset order.
inline std::vector<CellGraph> split_graphs(const Dataset& ds, Split s) {
  std::vector<CellGraph> out;
  for (std::size_t i : ds.indices(s)) out.push_back(ds.graphs[i]);
  return out;
}

}  // namespace ksx
