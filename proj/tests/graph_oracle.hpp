#pragma once

// Test-only brute-force references for the graph relations and losses.

#include <algorithm>
#include <random>
#include <vector>

#include "pebg/graph.hpp"
#include "pebg/model.hpp"

namespace pebg::testing {

/// Random graph with |Q| in [1, max_q], |S| in [1, max_s] and edge density
/// drawn per graph. When `connected_questions` is set every question gets at
/// least one skill.
inline BipartiteGraph random_graph(std::mt19937_64& rng, std::size_t max_q, std::size_t max_s,
                                   bool connected_questions = false) {
  std::uniform_int_distribution<std::size_t> nq(1, max_q), ns(1, max_s);
  const std::size_t q = nq(rng), s = ns(rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double density = unit(rng) * 0.4;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < q; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < s; ++j)
      if (unit(rng) < density) {
        edges.emplace_back(i, j);
        any = true;
      }
    if (connected_questions && !any) edges.emplace_back(i, std::uniform_int_distribution<std::size_t>(0, s - 1)(rng));
  }
  return graph_from_edges(q, s, edges);
}

/// O(n^2) pairwise neighbor-set intersection.
inline PairRelation brute_force_similarity(const std::vector<std::vector<std::size_t>>& neighbors) {
  const std::size_t n = neighbors.size();
  std::vector<std::vector<std::size_t>> rows(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<std::size_t> common;
      std::set_intersection(neighbors[i].begin(), neighbors[i].end(), neighbors[j].begin(), neighbors[j].end(),
                            std::back_inserter(common));
      if (!common.empty()) rows[i].push_back(j);
    }
  return PairRelation(n, n, std::move(rows));
}

/// Literal double sum of -(r log r^ + (1 - r) log(1 - r^)) with r^ = sigma(x_i . y_j).
inline double brute_force_cross_entropy(const Matrix& x, const Matrix& y, const std::vector<std::vector<int>>& r) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j) {
      double inner = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) inner += x(i, k) * y(j, k);
      const double p = 1.0 / (1.0 + std::exp(-inner));
      total += -(r[i][j] * std::log(p) + (1 - r[i][j]) * std::log(1.0 - p));
    }
  return total;
}

}  // namespace pebg::testing
