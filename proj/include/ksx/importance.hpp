#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "ksx/error.hpp"

namespace ksx {

struct NodeImportanceMap {
  std::string graph_id;
  std::string method;
  std::vector<double> scores;

  friend bool operator==(const NodeImportanceMap&, const NodeImportanceMap&) = default;
};

// Per-graph min-max scaling onto [0, 1]. Constant inputs map to 0.5
// everywhere, except that a lone node carries all of the importance and
// scores 1.
inline std::vector<double> minmax_normalize(const std::vector<double>& raw) {
  if (raw.empty()) return {};
  if (raw.size() == 1) return {1.0};
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> out(raw.size(), 0.5);
  if (hi == lo) return out;
  const double span = hi - lo;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - lo) / span;
  return out;
}

inline NodeImportanceMap make_map(std::string graph_id, std::string method,
                                  const std::vector<double>& raw) {
  return {std::move(graph_id), std::move(method), minmax_normalize(raw)};
}

// Ranking AUC of scores for positive (label 1) against negative nodes; ties
// count one half. Requires at least one node of each kind.
inline double ranking_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  require(scores.size() == labels.size(), ErrorKind::DimensionMismatch,
          "score and label lengths differ");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with mid-ranks.
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t r = i; r < j; ++r)
      if (labels[order[r]]) rank_sum += mid, ++pos;
    i = j;
  }
  const std::size_t neg = scores.size() - pos;
  require(pos > 0 && neg > 0, ErrorKind::InvalidArgument, "AUC needs both classes present");
  const double u = rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace ksx
