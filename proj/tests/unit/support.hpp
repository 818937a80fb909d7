#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "ksx/graph.hpp"
#include "ksx/model.hpp"
#include "ksx/train.hpp"

namespace ksx::test {

// Small model with every parameter drawn uniformly from [-scale, scale].
inline GnnModel random_model(std::uint64_t seed, int d = 3, int hidden = 4, int layers = 2, int classes = 3,
                             double scale = 0.5) {
  Architecture a;
  a.layers = layers;
  a.hidden = hidden;
  a.input_dim = d;
  a.num_classes = classes;
  a.epsilons.assign(layers, 0.0);
  for (int l = 0; l < layers; ++l) a.epsilons[l] = 0.1 * l;
  GnnModel m(a);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& p : m.params()) p = u(rng);
  return m;
}

// Random points in the unit square joined by k-NN, Gaussian features.
inline CellGraph random_graph(std::uint64_t seed, int n, int d, int k = 3, int label = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Point> pts(n);
  for (auto& p : pts) p = {u(rng), u(rng)};
  Matrix f(n, d);
  for (double& x : f.data()) x = g(rng);
  auto edges = n > k ? knn_build(pts, k) : std::vector<Edge>{};
  return CellGraph("r" + std::to_string(seed), pts, f, edges, label);
}

// Graph with the given one-column features and no edges.
inline CellGraph isolated_graph(const std::string& id, const std::vector<double>& x, int label) {
  Matrix f(x.size(), 1);
  for (std::size_t v = 0; v < x.size(); ++v) f(v, 0) = x[v];
  std::vector<Point> pts(x.size());
  for (std::size_t v = 0; v < x.size(); ++v) pts[v] = {static_cast<double>(v), 0.0};
  return CellGraph(id, pts, f, {}, label);
}

// One-feature, one-layer model that predicts class 1 exactly when some node
// carries a positive feature: the mean readout is then positive and the
// class-1 logit is 1000 e - 0.001.
inline GnnModel marker_model() {
  Architecture a;
  a.layers = 1;
  a.hidden = 1;
  a.input_dim = 1;
  a.num_classes = 2;
  a.epsilons = {0.0};
  GnnModel m(a);
  // [W0 (1x1), b0, U1 (1x1), c1, U2 (1x2), c2 (2)]
  m.set_params({1.0, 0.0, 1.0, 0.0, 0.0, 1000.0, 0.0, -0.001});
  return m;
}

struct Trained {
  Dataset data;
  TrainResult result;
};

// Default synthetic dataset and the classifier trained on it, per seed;
// computed once per process.
inline const Trained& trained_default(std::uint64_t seed) {
  static std::mutex mu;
  static std::map<std::uint64_t, Trained> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(seed);
  if (it == cache.end()) {
    SyntheticConfig sc;
    sc.seed = seed;
    TrainConfig tc;
    tc.seed = seed;
    Dataset ds = generate_synthetic(sc);
    Architecture a;
    TrainResult r = train(a, ds, tc);
    it = cache.emplace(seed, Trained{std::move(ds), std::move(r)}).first;
  }
  return it->second;
}

inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max(std::sqrt(na) + std::sqrt(nb), 1e-12);
  return std::sqrt(diff) / scale;
}

}  // namespace ksx::test
