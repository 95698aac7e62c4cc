#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "pebg/graph.hpp"
#include "graph_oracle.hpp"

namespace pebg {
namespace {

using Edges = std::vector<std::pair<std::size_t, std::size_t>>;

// q1-s1, q2-s1, q2-s2, q3-s2 with zero-based indices
BipartiteGraph path_graph() { return graph_from_edges(3, 2, Edges{{0, 0}, {1, 0}, {1, 1}, {2, 1}}); }

TEST(BuildGraph, AdjacencyTranscription) {
  auto g = path_graph();
  const int expected[3][2] = {{1, 0}, {1, 1}, {0, 1}};
  for (std::size_t q = 0; q < 3; ++q)
    for (std::size_t s = 0; s < 2; ++s) EXPECT_EQ(g.has_edge(q, s), expected[q][s] == 1);
  EXPECT_EQ(g.skill_neighbors[0], (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(g.num_edges(), 4u);
}

TEST(BuildGraph, DuplicatesCollapseAndListsSorted) {
  auto g = graph_from_edges(2, 3, Edges{{0, 2}, {0, 0}, {0, 2}, {1, 1}, {0, 0}});
  EXPECT_EQ(g.num_edges(), 3u);
  EXPECT_EQ(g.question_neighbors[0], (std::vector<std::size_t>{0, 2}));
}

TEST(BuildGraph, FromDatasetCountsDistinctPairs) {
  std::istringstream csv(
      "student_id,question_id,skill_ids,correct\n"
      "u,a,x,1\nu,a,x,0\nu,b,x;y,1\nu,b,y,1\nu,c,z,0\n");
  auto ds = ingest(csv, {});
  auto g = build_graph(ds);
  EXPECT_EQ(g.num_edges(), 4u);
  std::ostringstream dump;
  write_edge_list(dump, g);
  EXPECT_EQ(dump.str(), "0 0\n1 0\n1 1\n2 2\n");
}

TEST(Similarity, PathGraphQuestionPairs) {
  auto rel = question_similarity(path_graph()).pairs;
  std::set<std::pair<std::size_t, std::size_t>> got;
  for (std::size_t i = 0; i < 3; ++i)
    for (auto j : rel.row(i)) got.insert({i, j});
  const std::set<std::pair<std::size_t, std::size_t>> expected{{0, 0}, {1, 1}, {2, 2}, {0, 1},
                                                               {1, 0}, {1, 2}, {2, 1}};
  EXPECT_EQ(got, expected);
  EXPECT_FALSE(rel.contains(0, 2));
}

TEST(Similarity, PathGraphSkillPairs) {
  auto rel = skill_similarity(path_graph()).pairs;
  EXPECT_TRUE(rel.contains(0, 1));
  EXPECT_TRUE(rel.contains(1, 0));
  EXPECT_TRUE(rel.contains(0, 0));
  EXPECT_TRUE(rel.contains(1, 1));
}

TEST(Similarity, StarAndDisconnected) {
  auto star = graph_from_edges(4, 1, Edges{{0, 0}, {1, 0}, {2, 0}, {3, 0}});
  EXPECT_EQ(question_similarity(star).pairs.num_positive(), 16u);

  auto split = graph_from_edges(4, 2, Edges{{0, 0}, {1, 0}, {2, 1}, {3, 1}});
  auto q = question_similarity(split).pairs;
  for (std::size_t i : {0, 1})
    for (std::size_t j : {2, 3}) EXPECT_FALSE(q.contains(i, j));
  EXPECT_FALSE(skill_similarity(split).pairs.contains(0, 1));
}

TEST(Similarity, MatchesBruteForceOnRandomGraphs) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = testing::random_graph(rng, 20, 20);
    ASSERT_EQ(question_similarity(g).pairs, testing::brute_force_similarity(g.question_neighbors));
    ASSERT_EQ(skill_similarity(g).pairs, testing::brute_force_similarity(g.skill_neighbors));
  }
}

TEST(Similarity, SymmetricAndReflexiveProperty) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = testing::random_graph(rng, 20, 20);
    for (const auto& [rel, deg] : {std::pair{question_similarity(g).pairs, &g.question_neighbors},
                                   std::pair{skill_similarity(g).pairs, &g.skill_neighbors}}) {
      for (std::size_t i = 0; i < rel.rows(); ++i) {
        EXPECT_EQ(rel.contains(i, i), !(*deg)[i].empty());
        for (auto j : rel.row(i)) EXPECT_TRUE(rel.contains(j, i));
      }
    }
  }
}

TEST(Similarity, PositiveCountInvariantUnderRelabeling) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    auto g = testing::random_graph(rng, 15, 8);
    std::vector<std::size_t> qperm(g.num_questions), sperm(g.num_skills);
    std::iota(qperm.begin(), qperm.end(), 0);
    std::iota(sperm.begin(), sperm.end(), 0);
    std::shuffle(qperm.begin(), qperm.end(), rng);
    std::shuffle(sperm.begin(), sperm.end(), rng);
    Edges relabeled;
    for (std::size_t q = 0; q < g.num_questions; ++q)
      for (auto s : g.question_neighbors[q]) relabeled.emplace_back(qperm[q], sperm[s]);
    auto h = graph_from_edges(g.num_questions, g.num_skills, relabeled);
    auto a = question_similarity(g).pairs;
    auto b = question_similarity(h).pairs;
    ASSERT_EQ(a.num_positive(), b.num_positive());
    for (std::size_t i = 0; i < g.num_questions; ++i)
      for (auto j : a.row(i)) ASSERT_TRUE(b.contains(qperm[i], qperm[j]));
  }
}

TEST(SamplePairs, CountsAndLabels) {
  auto g = path_graph();
  auto rel = question_similarity(g).pairs;
  std::mt19937_64 rng(1);
  auto batch = sample_pairs(rel, 1, rng);
  EXPECT_EQ(batch.pairs.size(), 2 * rel.num_positive());
  EXPECT_EQ(batch.positives, rel.num_positive());
  std::set<std::pair<std::uint32_t, std::uint32_t>> positives;
  for (const auto& p : batch.pairs) {
    EXPECT_EQ(p.label, rel.contains(p.first, p.second) ? 1.0 : 0.0);
    if (p.label == 1.0) positives.insert({p.first, p.second});
  }
  // every positive exactly once per pass
  EXPECT_EQ(positives.size(), rel.num_positive());

  auto three = sample_pairs(explicit_relation(g), 3, rng);
  EXPECT_EQ(three.pairs.size(), 4u * 4u);
  EXPECT_EQ(three.negatives, 12u);
}

TEST(SamplePairs, DeterministicGivenRngState) {
  auto rel = explicit_relation(path_graph());
  std::mt19937_64 a(77), b(77);
  EXPECT_EQ(sample_pairs(rel, 2, a).pairs, sample_pairs(rel, 2, b).pairs);
}

TEST(SamplePairs, BoundaryCases) {
  std::mt19937_64 rng(3);
  PairRelation empty(3, 3, std::vector<std::vector<std::size_t>>(3));
  auto none = sample_pairs(empty, 1, rng);
  EXPECT_TRUE(none.no_positives());
  EXPECT_TRUE(none.pairs.empty());

  auto star = graph_from_edges(3, 1, Edges{{0, 0}, {1, 0}, {2, 0}});
  auto dense = sample_pairs(question_similarity(star).pairs, 2, rng);
  EXPECT_TRUE(dense.negatives_exhausted());
  EXPECT_EQ(dense.negatives, 0u);
  EXPECT_EQ(dense.pairs.size(), 9u);

  EXPECT_THROW(sample_pairs(empty, 0, rng), ConfigError);
}

TEST(PairStream, BatchesSpanPasses) {
  auto rel = explicit_relation(path_graph());
  PairStream stream(rel, 1);
  std::mt19937_64 rng(4);
  std::size_t positives = 0;
  for (int i = 0; i < 6; ++i) {
    auto b = stream.next(4, rng);
    ASSERT_EQ(b.size(), 4u);
    for (const auto& p : b) positives += p.label == 1.0;
  }
  // 24 pairs = 3 passes of 8, each pass holding 4 positives
  EXPECT_EQ(positives, 12u);
}

}  // namespace
}  // namespace pebg
