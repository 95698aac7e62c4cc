#pragma once

// Planted-structure interaction logs for tests and demos.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pebg/dataset.hpp"
#include "pebg/error.hpp"

namespace pebg {

struct SyntheticSpec {
  std::size_t num_skills = 4;
  std::size_t questions_per_skill = 5;
  /// Chance that a question also gets a second skill from its cluster.
  double skill_overlap = 0.0;
  /// Skills are split into this many contiguous clusters; 0 means one
  /// cluster per skill (second skills then never occur).
  std::size_t num_clusters = 0;
  std::size_t num_students = 50;
  std::size_t records_per_student = 20;
  double easiness_min = 0.2;
  double easiness_max = 0.9;

  void validate() const {
    if (num_skills == 0 || questions_per_skill == 0 || num_students == 0 || records_per_student == 0)
      throw ConfigError("synthetic sizes must be positive");
    if (!(skill_overlap >= 0.0 && skill_overlap <= 1.0)) throw ConfigError("skill_overlap must lie in [0, 1]");
    if (!(easiness_min >= 0.0 && easiness_min <= easiness_max && easiness_max <= 1.0))
      throw ConfigError("easiness range must satisfy 0 <= min <= max <= 1");
    if (num_clusters > num_skills) throw ConfigError("more clusters than skills");
  }
};

struct SyntheticData {
  InteractionDataset dataset;
  /// Planted skills per dataset question index (sorted).
  std::vector<std::vector<std::size_t>> true_skills;
  /// Planted answer probability per dataset question index.
  std::vector<double> easiness;
  /// The raw CSV the dataset was ingested from.
  std::string csv;
};

/// Answers are independent Bernoulli(easiness_q) draws; each record picks a
/// question uniformly. Response times scale with 1 - easiness and question
/// types are drawn per question, so both attribute features carry signal.
inline SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t clusters = spec.num_clusters == 0 ? spec.num_skills : spec.num_clusters;
  auto cluster_of = [&](std::size_t s) { return s * clusters / spec.num_skills; };

  const std::size_t n_questions = spec.num_skills * spec.questions_per_skill;
  std::vector<std::vector<std::size_t>> skills(n_questions);
  std::vector<double> easiness(n_questions);
  std::vector<std::string> qtype(n_questions);
  for (std::size_t s = 0; s < spec.num_skills; ++s) {
    std::vector<std::size_t> mates;
    for (std::size_t o = 0; o < spec.num_skills; ++o)
      if (o != s && cluster_of(o) == cluster_of(s)) mates.push_back(o);
    for (std::size_t j = 0; j < spec.questions_per_skill; ++j) {
      const std::size_t q = s * spec.questions_per_skill + j;
      skills[q].push_back(s);
      if (!mates.empty() && unit(rng) < spec.skill_overlap)
        skills[q].push_back(mates[std::uniform_int_distribution<std::size_t>(0, mates.size() - 1)(rng)]);
      std::sort(skills[q].begin(), skills[q].end());
      easiness[q] = spec.easiness_min + (spec.easiness_max - spec.easiness_min) * unit(rng);
      qtype[q] = unit(rng) < 0.5 ? "choice" : "fillin";
    }
  }

  std::ostringstream csv;
  csv << "student_id,question_id,skill_ids,correct,response_time_ms,question_type\n";
  std::uniform_int_distribution<std::size_t> pick(0, n_questions - 1);
  std::uniform_real_distribution<double> jitter(0.5, 1.5);
  for (std::size_t u = 0; u < spec.num_students; ++u) {
    for (std::size_t t = 0; t < spec.records_per_student; ++t) {
      const std::size_t q = pick(rng);
      const bool correct = unit(rng) < easiness[q];
      const double rt = std::round((5000.0 + 20000.0 * (1.0 - easiness[q])) * jitter(rng));
      csv << 'u' << u << ",q" << q << ',';
      for (std::size_t k = 0; k < skills[q].size(); ++k) csv << (k ? ";" : "") << 's' << skills[q][k];
      csv << ',' << (correct ? 1 : 0) << ',' << rt << ',' << qtype[q] << '\n';
    }
  }

  SyntheticData out;
  out.csv = csv.str();
  std::istringstream in(out.csv);
  IngestOptions options;
  options.min_seq_len = std::min<std::size_t>(3, spec.records_per_student);
  out.dataset = ingest(in, options);

  const auto& ds = out.dataset;
  out.true_skills.resize(ds.num_questions);
  out.easiness.resize(ds.num_questions);
  for (std::size_t i = 0; i < ds.num_questions; ++i) {
    const std::size_t raw = std::stoul(ds.question_ids.name(i).substr(1));
    out.easiness[i] = easiness[raw];
    for (std::size_t s : skills[raw]) {
      auto idx = ds.skill_ids.find("s" + std::to_string(s));
      if (idx) out.true_skills[i].push_back(*idx);
    }
    std::sort(out.true_skills[i].begin(), out.true_skills[i].end());
  }
  return out;
}

}  // namespace pebg
