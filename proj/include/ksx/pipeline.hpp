#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ksx/explainers.hpp"
#include "ksx/ks_bench.hpp"
#include "ksx/ks_explainer.hpp"
#include "ksx/parallel.hpp"

namespace ksx {

// Ground truth for the graphs of one split, when the dataset carries it.
inline std::optional<std::vector<std::vector<int>>> split_truth(const Dataset& ds, Split s) {
  if (!ds.ground_truth) return std::nullopt;
  std::vector<std::vector<int>> out;
  for (std::size_t i : ds.indices(s)) out.push_back((*ds.ground_truth)[i]);
  return out;
}

// Runs one explainer over a list of graphs; maps come back in input order.
// `truth` is needed only by the oracle.
inline std::vector<NodeImportanceMap> explain_graphs(const std::string& method, const GnnModel& model,
                                                     const std::vector<CellGraph>& graphs,
                                                     const std::vector<std::vector<int>>* truth,
                                                     const BatchExplainConfig& cfg) {
  if (method == "ks-gnnexplainer") return explain_all_batched(model, graphs, cfg);
  std::vector<NodeImportanceMap> maps(graphs.size());
  if (method == "oracle") {
    require(truth != nullptr, ErrorKind::InvalidArgument, "the oracle needs ground-truth importance");
    require(truth->size() == graphs.size(), ErrorKind::DimensionMismatch, "ground truth count mismatch");
    for (std::size_t i = 0; i < graphs.size(); ++i) maps[i] = explain_oracle(graphs[i], (*truth)[i]);
    return maps;
  }
  if (method == "random") {
    for (std::size_t i = 0; i < graphs.size(); ++i) maps[i] = explain_random(graphs[i], cfg.mask.seed);
    return maps;
  }
  std::function<NodeImportanceMap(const CellGraph&)> one;
  if (method == "gnnexplainer")
    one = [&](const CellGraph& g) { return explain_gnnexplainer(model, g, cfg.mask); };
  else if (method == "gradcam")
    one = [&](const CellGraph& g) { return explain_gradcam(model, g); };
  else if (method == "gradcampp")
    one = [&](const CellGraph& g) { return explain_gradcampp(model, g); };
  else if (method == "graphlrp")
    one = [&](const CellGraph& g) { return explain_graphlrp(model, g); };
  else
    throw Error(ErrorKind::InvalidArgument, "unknown method '" + method + "'");
  parallel_for(graphs.size(), [&](std::size_t i) { maps[i] = one(graphs[i]); });
  return maps;
}

// Mean motif-recovery AUC over the graphs whose ground truth has both motif
// and background nodes; nullopt when there are none.
inline std::optional<double> mean_motif_auc(const std::vector<NodeImportanceMap>& maps,
                                            const std::vector<std::vector<int>>& truth) {
  require(maps.size() == truth.size(), ErrorKind::DimensionMismatch, "map and ground truth counts differ");
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    std::size_t pos = 0;
    for (int t : truth[i]) pos += t != 0;
    if (pos == 0 || pos == truth[i].size()) continue;
    sum += ranking_auc(maps[i].scores, truth[i]);
    ++used;
  }
  if (used == 0) return std::nullopt;
  return sum / static_cast<double>(used);
}

// Nuclei F1 over the graphs that contain at least one motif node. Graphs
// without any motif have nothing to segment, and a min-max normalized map of
// an all-zero truth is constant 0.5, which the >= 0.5 rule calls tumour.
inline std::optional<NucleiF1> motif_graph_f1(const std::vector<NodeImportanceMap>& maps,
                                              const std::vector<std::vector<int>>& truth) {
  require(maps.size() == truth.size(), ErrorKind::DimensionMismatch, "map and ground truth counts differ");
  std::vector<NodeImportanceMap> m;
  std::vector<std::vector<int>> t;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (std::none_of(truth[i].begin(), truth[i].end(), [](int x) { return x != 0; })) continue;
    m.push_back(maps[i]);
    t.push_back(truth[i]);
  }
  if (m.empty()) return std::nullopt;
  return nuclei_f1(m, t);
}

struct MethodBench {
  KsReport ks;
  std::vector<std::pair<double, double>> fidelity;
  std::optional<NucleiF1> f1;
};

inline MethodBench bench_method(const std::string& method, const GnnModel& model, const std::vector<CellGraph>& graphs,
                                const std::vector<NodeImportanceMap>& maps,
                                const std::vector<std::vector<int>>* truth) {
  MethodBench b;
  b.ks = ks_bench(method, model, graphs, maps);
  b.fidelity = fidelity_curve(model, graphs, maps);
  if (truth) b.f1 = motif_graph_f1(maps, *truth);
  return b;
}

}  // namespace ksx
