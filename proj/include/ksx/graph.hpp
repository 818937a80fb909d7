#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ksx/error.hpp"
#include "ksx/rng.hpp"
#include "ksx/tensor.hpp"

namespace ksx {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

using Edge = std::pair<int, int>;

// Undirected cell graph. Edges are stored once with u < v, sorted; the
// adjacency lists are derived from them and kept sorted.
class CellGraph {
 public:
  CellGraph() = default;

  CellGraph(std::string id, std::vector<Point> coords, Matrix features,
            std::vector<Edge> edges, int label)
      : id_(std::move(id)), coords_(std::move(coords)), features_(std::move(features)),
        label_(label) {
    const std::size_t n = coords_.size();
    require(features_.rows() == n, ErrorKind::InvalidArgument,
            "feature row count " + std::to_string(features_.rows()) +
                " does not match node count " + std::to_string(n));
    for (const Point& p : coords_)
      require(std::isfinite(p.x) && std::isfinite(p.y), ErrorKind::InvalidArgument,
              "non-finite coordinate");
    for (double f : features_.data())
      require(std::isfinite(f), ErrorKind::InvalidArgument, "non-finite feature");
    require(label_ >= 0, ErrorKind::InvalidArgument, "negative label");

    for (auto& [u, v] : edges) {
      require(u >= 0 && v >= 0 && static_cast<std::size_t>(u) < n &&
                  static_cast<std::size_t>(v) < n,
              ErrorKind::InvalidArgument, "edge endpoint out of range");
      require(u != v, ErrorKind::InvalidArgument, "self edge");
      if (u > v) std::swap(u, v);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    edges_ = std::move(edges);

    adjacency_.assign(n, {});
    for (auto [u, v] : edges_) {
      adjacency_[u].push_back(v);
      adjacency_[v].push_back(u);
    }
    for (auto& a : adjacency_) std::sort(a.begin(), a.end());
  }

  const std::string& id() const { return id_; }
  std::size_t num_nodes() const { return coords_.size(); }
  std::size_t feature_dim() const { return features_.cols(); }
  const std::vector<Point>& coords() const { return coords_; }
  const Matrix& features() const { return features_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& neighbors(std::size_t v) const { return adjacency_[v]; }
  int label() const { return label_; }

  friend bool operator==(const CellGraph& a, const CellGraph& b) {
    return a.id_ == b.id_ && a.coords_ == b.coords_ && a.features_ == b.features_ &&
           a.edges_ == b.edges_ && a.label_ == b.label_;
  }

 private:
  std::string id_;
  std::vector<Point> coords_;
  Matrix features_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adjacency_;
  int label_ = 0;
};

enum class Split { Train, Val, Test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw Error(ErrorKind::Parse, "unknown split '" + s + "'");
}

struct Dataset {
  std::vector<CellGraph> graphs;
  int num_classes = 2;
  std::vector<Split> split;
  // Per graph, per node: 1 when the node belongs to the planted motif.
  std::optional<std::vector<std::vector<int>>> ground_truth;

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < graphs.size(); ++i)
      if (split[i] == s) out.push_back(i);
    return out;
  }

  void validate() const {
    require(num_classes > 0, ErrorKind::InvalidArgument, "num_classes must be positive");
    require(split.size() == graphs.size(), ErrorKind::InvalidArgument,
            "split tag count does not match graph count");
    for (const auto& g : graphs)
      require(g.label() < num_classes, ErrorKind::InvalidArgument,
              "graph '" + g.id() + "' label out of range");
    if (ground_truth) {
      require(ground_truth->size() == graphs.size(), ErrorKind::InvalidArgument,
              "ground truth count does not match graph count");
      for (std::size_t i = 0; i < graphs.size(); ++i)
        require((*ground_truth)[i].size() == graphs[i].num_nodes(), ErrorKind::InvalidArgument,
                "ground truth length mismatch for graph '" + graphs[i].id() + "'");
    }
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Symmetric k-nearest-neighbour edge set over 2-D points. Euclidean
// distance; equal distances prefer the smaller node index.
inline std::vector<Edge> knn_build(const std::vector<Point>& points, int k) {
  const std::size_t n = points.size();
  require(k > 0, ErrorKind::InvalidArgument, "k must be positive");
  require(static_cast<std::size_t>(k) < n, ErrorKind::InvalidArgument,
          "k must be smaller than the number of points");
  for (const Point& p : points)
    require(std::isfinite(p.x) && std::isfinite(p.y), ErrorKind::InvalidArgument,
            "non-finite coordinate");

  std::vector<Edge> edges;
  edges.reserve(n * static_cast<std::size_t>(k));
  std::vector<std::pair<double, int>> cand;
  for (std::size_t u = 0; u < n; ++u) {
    cand.clear();
    for (std::size_t v = 0; v < n; ++v) {
      if (v == u) continue;
      const double dx = points[u].x - points[v].x;
      const double dy = points[u].y - points[v].y;
      cand.emplace_back(dx * dx + dy * dy, static_cast<int>(v));
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (int i = 0; i < k; ++i) {
      int a = static_cast<int>(u), b = cand[i].second;
      edges.emplace_back(std::min(a, b), std::max(a, b));
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

// Induced subgraph on the nodes not listed in `victims`; surviving nodes keep
// their relative order and are renumbered 0..n'-1.
inline CellGraph remove_nodes(const CellGraph& g, const std::vector<int>& victims) {
  const std::size_t n = g.num_nodes();
  std::vector<char> drop(n, 0);
  for (int v : victims) {
    require(v >= 0 && static_cast<std::size_t>(v) < n, ErrorKind::InvalidArgument,
            "victim index out of range");
    drop[v] = 1;
  }
  std::vector<int> remap(n, -1);
  int next = 0;
  for (std::size_t v = 0; v < n; ++v)
    if (!drop[v]) remap[v] = next++;

  std::vector<Point> coords;
  Matrix features(static_cast<std::size_t>(next), g.feature_dim());
  coords.reserve(next);
  for (std::size_t v = 0; v < n; ++v) {
    if (drop[v]) continue;
    coords.push_back(g.coords()[v]);
    auto src = g.features().row(v);
    std::copy(src.begin(), src.end(), features.row(remap[v]).begin());
  }
  std::vector<Edge> edges;
  for (auto [u, v] : g.edges())
    if (!drop[u] && !drop[v]) edges.emplace_back(remap[u], remap[v]);
  return CellGraph(g.id(), std::move(coords), std::move(features), std::move(edges), g.label());
}

// Number of nodes selected by a removal fraction: floor(fraction * n). The
// small guard keeps grid fractions such as 0.15 * 20 from rounding down.
inline std::size_t fraction_count(double fraction, std::size_t n) {
  require(fraction >= 0.0 && fraction <= 1.0, ErrorKind::InvalidArgument,
          "fraction must lie in [0, 1]");
  const auto c = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  return std::min(c, n);
}

enum class Direction { Most, Least };

// Node order by score, highest first for Most and lowest first for Least;
// equal scores keep the smaller index first in both directions.
inline std::vector<int> rank_nodes(const std::vector<double>& scores, Direction dir) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  if (dir == Direction::Most)
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
  else
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] < scores[b]; });
  return order;
}

inline std::vector<int> top_fraction_nodes(const std::vector<double>& scores, double fraction,
                                           Direction dir) {
  const std::size_t count = fraction_count(fraction, scores.size());
  std::vector<int> order = rank_nodes(scores, dir);
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

struct SyntheticConfig {
  int num_graphs = 200;
  int min_nodes = 40;
  int max_nodes = 60;
  int k = 5;
  int feature_dim = 8;
  int motif_size = 8;
  double motif_feature_shift = 2.0;
  // Standard deviation of motif node positions around the motif centre.
  double coordinate_noise = 0.3;
  // Side length of the square the background nodes are scattered over.
  double extent = 10.0;
  // Background nodes keep at least this distance from the cluster centre, so
  // the cluster region holds cluster nodes only.
  double motif_clearance = 1.0;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    require(num_graphs >= 1, ErrorKind::Config, "num_graphs must be positive");
    require(min_nodes >= 1 && max_nodes >= min_nodes, ErrorKind::Config,
            "invalid nodes_per_graph_range");
    require(feature_dim >= 1, ErrorKind::Config, "feature_dim must be at least 1");
    require(k >= 1 && k < min_nodes, ErrorKind::Config, "k must be in [1, min_nodes)");
    require(motif_size >= 1 && motif_size < min_nodes, ErrorKind::Config,
            "motif_size must be in [1, min_nodes)");
    require(std::isfinite(motif_feature_shift), ErrorKind::Config, "motif shift must be finite");
    require(std::isfinite(coordinate_noise) && coordinate_noise >= 0.0, ErrorKind::Config,
            "coordinate_noise must be finite and non-negative");
    require(extent > 0.0, ErrorKind::Config, "extent must be positive");
    require(motif_clearance >= 0.0 && 3.2 * motif_clearance * motif_clearance <= 0.5 * extent * extent,
            ErrorKind::Config, "motif_clearance must be non-negative and leave room for background nodes");
    require(train_fraction > 0.0 && val_fraction >= 0.0 && train_fraction + val_fraction < 1.0,
            ErrorKind::Config, "invalid split fractions");
  }
};

// Two-class synthetic cell graphs. Every graph gets a tight spatial cluster of
// motif_size nodes; only in class-1 graphs are the cluster's features shifted
// along the unit all-ones direction, so spatial structure carries no label
// information on its own. Background nodes are scattered uniformly outside a
// clearance disk around the cluster. Node order is shuffled so indices do not reveal
// motif membership.
inline Dataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.num_classes = 2;
  std::vector<std::vector<int>> gt;
  const double shift_per_dim = cfg.motif_feature_shift / std::sqrt(double(cfg.feature_dim));
  const double margin = std::min(cfg.extent / 2.0, 3.0 * cfg.coordinate_noise + 0.1 * cfg.extent);

  for (int gi = 0; gi < cfg.num_graphs; ++gi) {
    Rng rng = make_stream(cfg.seed, {0x67656eULL, static_cast<std::uint64_t>(gi)});
    std::uniform_int_distribution<int> size_dist(cfg.min_nodes, cfg.max_nodes);
    std::uniform_real_distribution<double> pos(0.0, cfg.extent);
    std::uniform_real_distribution<double> centre_pos(margin, cfg.extent - margin);
    std::normal_distribution<double> normal(0.0, 1.0);

    const int label = gi % 2;
    const int n = size_dist(rng);
    std::vector<Point> raw_coords(n);
    std::vector<int> raw_motif(n, 0);
    const Point centre{centre_pos(rng), centre_pos(rng)};
    for (int v = 0; v < n; ++v) {
      if (v < cfg.motif_size) {
        raw_coords[v] = {centre.x + cfg.coordinate_noise * normal(rng),
                         centre.y + cfg.coordinate_noise * normal(rng)};
        raw_motif[v] = label == 1 ? 1 : 0;
      } else {
        do raw_coords[v] = {pos(rng), pos(rng)};
        while (std::hypot(raw_coords[v].x - centre.x, raw_coords[v].y - centre.y) < cfg.motif_clearance);
      }
    }
    Matrix raw_features(n, cfg.feature_dim);
    for (int v = 0; v < n; ++v)
      for (int c = 0; c < cfg.feature_dim; ++c)
        raw_features(v, c) = normal(rng) + (raw_motif[v] ? shift_per_dim : 0.0);

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Point> coords(n);
    Matrix features(n, cfg.feature_dim);
    std::vector<int> motif(n);
    for (int v = 0; v < n; ++v) {
      coords[v] = raw_coords[perm[v]];
      motif[v] = raw_motif[perm[v]];
      auto src = raw_features.row(perm[v]);
      std::copy(src.begin(), src.end(), features.row(v).begin());
    }
    auto edges = knn_build(coords, cfg.k);
    ds.graphs.emplace_back("g" + std::to_string(gi), std::move(coords), std::move(features),
                           std::move(edges), label);
    gt.push_back(std::move(motif));
  }

  // Stratified split: each class is shuffled and cut at the same fractions.
  ds.split.assign(ds.graphs.size(), Split::Test);
  Rng split_rng = make_stream(cfg.seed, {0x73706c6974ULL});
  for (int c = 0; c < ds.num_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.graphs.size(); ++i)
      if (ds.graphs[i].label() == c) members.push_back(i);
    std::shuffle(members.begin(), members.end(), split_rng);
    const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * members.size()));
    const auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * members.size()));
    for (std::size_t r = 0; r < members.size(); ++r)
      ds.split[members[r]] = r < n_train ? Split::Train : (r < n_train + n_val ? Split::Val : Split::Test);
  }
  ds.ground_truth = std::move(gt);
  ds.validate();
  return ds;
}

}  // namespace ksx
