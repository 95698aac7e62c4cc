#pragma once

// Question-skill bipartite graph, the explicit and implicit pair relations
// derived from it, and pair sampling for the graph losses.

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "pebg/dataset.hpp"
#include "pebg/error.hpp"

namespace pebg {

struct BipartiteGraph {
  std::size_t num_questions = 0;
  std::size_t num_skills = 0;
  std::vector<std::vector<std::size_t>> question_neighbors;  // sorted skill indices
  std::vector<std::vector<std::size_t>> skill_neighbors;     // sorted question indices

  std::size_t num_edges() const {
    std::size_t n = 0;
    for (const auto& nb : question_neighbors) n += nb.size();
    return n;
  }

  bool has_edge(std::size_t q, std::size_t s) const {
    const auto& nb = question_neighbors.at(q);
    return std::binary_search(nb.begin(), nb.end(), s);
  }

  bool operator==(const BipartiteGraph&) const = default;
};

/// Builds a graph from (question, skill) pairs; duplicates collapse.
inline BipartiteGraph graph_from_edges(std::size_t num_questions, std::size_t num_skills,
                                       std::span<const std::pair<std::size_t, std::size_t>> edges) {
  BipartiteGraph g;
  g.num_questions = num_questions;
  g.num_skills = num_skills;
  g.question_neighbors.resize(num_questions);
  g.skill_neighbors.resize(num_skills);
  for (auto [q, s] : edges) {
    if (q >= num_questions || s >= num_skills) throw DataError("edge endpoint out of range");
    g.question_neighbors[q].push_back(s);
    g.skill_neighbors[s].push_back(q);
  }
  auto normalize = [](std::vector<std::size_t>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  for (auto& v : g.question_neighbors) normalize(v);
  for (auto& v : g.skill_neighbors) normalize(v);
  return g;
}

inline BipartiteGraph build_graph(const InteractionDataset& ds) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& st : ds.students)
    for (const auto& r : st.records)
      for (std::size_t s : r.skill_indices) edges.emplace_back(r.question_index, s);
  return graph_from_edges(ds.num_questions, ds.num_skills, edges);
}

/// One `q s` line per edge, question-major.
inline void write_edge_list(std::ostream& out, const BipartiteGraph& g) {
  for (std::size_t q = 0; q < g.num_questions; ++q)
    for (std::size_t s : g.question_neighbors[q]) out << q << ' ' << s << '\n';
}

// ---------------------------------------------------------------------------
// Sparse binary relations

/// Sparse binary relation over [0,rows) x [0,cols), stored as CSR with sorted
/// rows. Absent pairs are the negatives.
class PairRelation {
 public:
  PairRelation() = default;

  /// `rows_of[i]` lists the positive columns of row i (need not be sorted).
  PairRelation(std::size_t rows, std::size_t cols, std::vector<std::vector<std::size_t>> rows_of)
      : rows_(rows), cols_(cols) {
    if (rows_of.size() != rows) throw DataError("relation row count mismatch");
    offsets_.reserve(rows + 1);
    for (auto& r : rows_of) {
      std::sort(r.begin(), r.end());
      r.erase(std::unique(r.begin(), r.end()), r.end());
      for (std::size_t c : r) {
        if (c >= cols) throw DataError("relation column out of range");
        columns_.push_back(static_cast<std::uint32_t>(c));
      }
      offsets_.push_back(columns_.size());
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t num_positive() const noexcept { return columns_.size(); }
  std::size_t domain_size() const noexcept { return rows_ * cols_; }

  std::span<const std::uint32_t> row(std::size_t i) const {
    return {columns_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }

  bool contains(std::size_t i, std::size_t j) const {
    auto r = row(i);
    return std::binary_search(r.begin(), r.end(), static_cast<std::uint32_t>(j));
  }

  bool operator==(const PairRelation&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::uint32_t> columns_;
};

enum class Side { kQuestion, kSkill };

struct SimilarityRelation {
  Side side = Side::kQuestion;
  PairRelation pairs;
};

/// The question-skill adjacency itself as a relation (rows: questions).
inline PairRelation explicit_relation(const BipartiteGraph& g) {
  return PairRelation(g.num_questions, g.num_skills, g.question_neighbors);
}

namespace detail {

// i ~ j iff they share a neighbor on the other side: row i is the union of
// the neighbor lists of i's neighbors.
inline PairRelation common_neighbor_relation(const std::vector<std::vector<std::size_t>>& own,
                                             const std::vector<std::vector<std::size_t>>& other) {
  std::vector<std::vector<std::size_t>> rows(own.size());
  for (std::size_t i = 0; i < own.size(); ++i)
    for (std::size_t mid : own[i]) rows[i].insert(rows[i].end(), other[mid].begin(), other[mid].end());
  return PairRelation(own.size(), own.size(), std::move(rows));
}

}  // namespace detail

inline SimilarityRelation question_similarity(const BipartiteGraph& g) {
  return {Side::kQuestion, detail::common_neighbor_relation(g.question_neighbors, g.skill_neighbors)};
}

inline SimilarityRelation skill_similarity(const BipartiteGraph& g) {
  return {Side::kSkill, detail::common_neighbor_relation(g.skill_neighbors, g.question_neighbors)};
}

// ---------------------------------------------------------------------------
// Pair sampling

struct LabeledPair {
  std::uint32_t first = 0;
  std::uint32_t second = 0;
  double label = 0.0;

  bool operator==(const LabeledPair&) const = default;
};

struct SampledPairs {
  std::vector<LabeledPair> pairs;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  /// Negatives that could not be found within the retry budget.
  std::size_t missing_negatives = 0;

  bool no_positives() const noexcept { return positives == 0; }
  bool negatives_exhausted() const noexcept { return missing_negatives > 0; }
};

/// A uniform draw from the whole domain that is not a positive, or nothing
/// once `max_retries` draws all hit positives.
inline std::optional<LabeledPair> draw_negative(const PairRelation& rel, std::mt19937_64& rng,
                                                std::size_t max_retries = 64) {
  if (rel.num_positive() == rel.domain_size()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick_row(0, rel.rows() - 1);
  std::uniform_int_distribution<std::size_t> pick_col(0, rel.cols() - 1);
  for (std::size_t attempt = 0; attempt < max_retries; ++attempt) {
    const std::size_t i = pick_row(rng);
    const std::size_t j = pick_col(rng);
    if (!rel.contains(i, j)) return LabeledPair{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), 0.0};
  }
  return std::nullopt;
}

/// Every positive pair of `rel` in shuffled order.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> shuffled_positives(const PairRelation& rel,
                                                                              std::mt19937_64& rng) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  out.reserve(rel.num_positive());
  for (std::size_t i = 0; i < rel.rows(); ++i)
    for (std::uint32_t j : rel.row(i)) out.emplace_back(static_cast<std::uint32_t>(i), j);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

/// One pass over a relation: every positive pair exactly once in shuffled
/// order, each followed by `negatives_per_positive` pairs drawn uniformly
/// from the whole domain and rejected while they hit a positive.
inline SampledPairs sample_pairs(const PairRelation& rel, std::size_t negatives_per_positive, std::mt19937_64& rng,
                                 std::size_t max_retries = 64) {
  if (negatives_per_positive < 1) throw ConfigError("negatives per positive must be at least 1");
  SampledPairs out;
  if (rel.num_positive() == 0) return out;
  const auto positives = shuffled_positives(rel, rng);
  out.pairs.reserve(positives.size() * (1 + negatives_per_positive));
  for (const auto& [i, j] : positives) {
    out.pairs.push_back({i, j, 1.0});
    ++out.positives;
    for (std::size_t k = 0; k < negatives_per_positive; ++k) {
      if (auto neg = draw_negative(rel, rng, max_retries)) {
        out.pairs.push_back(*neg);
        ++out.negatives;
      } else {
        ++out.missing_negatives;
      }
    }
  }
  return out;
}

/// Every pair of the domain with its exact label; small instances only.
inline std::vector<LabeledPair> all_pairs(const PairRelation& rel) {
  std::vector<LabeledPair> out;
  out.reserve(rel.domain_size());
  for (std::size_t i = 0; i < rel.rows(); ++i)
    for (std::size_t j = 0; j < rel.cols(); ++j)
      out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), rel.contains(i, j) ? 1.0 : 0.0});
  return out;
}

/// Endless batch source over successive sampling passes of one relation.
/// Only the shuffled positives of the current pass are stored; negatives are
/// drawn as the batches are assembled.
class PairStream {
 public:
  PairStream(const PairRelation& rel, std::size_t negatives_per_positive)
      : rel_(&rel), negatives_(negatives_per_positive) {
    if (negatives_per_positive < 1) throw ConfigError("negatives per positive must be at least 1");
  }

  bool empty() const { return rel_->num_positive() == 0; }

  /// Next `n` pairs; starts a new pass whenever the current one runs out.
  std::vector<LabeledPair> next(std::size_t n, std::mt19937_64& rng) {
    std::vector<LabeledPair> batch;
    if (empty()) return batch;
    batch.reserve(n);
    while (batch.size() < n) {
      if (pending_negatives_ > 0) {
        --pending_negatives_;
        if (auto neg = draw_negative(*rel_, rng)) batch.push_back(*neg);
        continue;
      }
      if (cursor_ == order_.size()) {
        order_ = shuffled_positives(*rel_, rng);
        cursor_ = 0;
      }
      const auto [i, j] = order_[cursor_++];
      batch.push_back({i, j, 1.0});
      pending_negatives_ = negatives_;
    }
    return batch;
  }

 private:
  const PairRelation* rel_;
  std::size_t negatives_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> order_;
  std::size_t cursor_ = 0;
  std::size_t pending_negatives_ = 0;
};

}  // namespace pebg
