#pragma once

// Joint pre-training: lambda (L1 + L2 + L3) + (1 - lambda) L4 optimized with
// Adam, plus the exported question embedding table.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pebg/adam.hpp"
#include "pebg/dataset.hpp"
#include "pebg/error.hpp"
#include "pebg/graph.hpp"
#include "pebg/model.hpp"
#include "pebg/tensor.hpp"

namespace pebg {

struct Ablation {
  bool remove_explicit = false;         // RER: drop L1
  bool remove_implicit = false;         // RIS: drop L2 and L3
  bool remove_product_layer = false;    // RPL: export [q; s'; a]
  bool replace_with_fully_connected = false;  // RPF: ReLU(W z + b)

  FusionMode fusion() const {
    if (remove_product_layer) return FusionMode::kConcatenate;
    if (replace_with_fully_connected) return FusionMode::kFullyConnected;
    return FusionMode::kProduct;
  }
  bool any() const { return remove_explicit || remove_implicit || remove_product_layer || replace_with_fully_connected; }

  /// Comma-separated subset of RER, RIS, RPL, RPF (empty string: none).
  static Ablation parse(const std::string& text) {
    Ablation a;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto name = detail::trim(item);
      if (name.empty()) continue;
      if (name == "RER") a.remove_explicit = true;
      else if (name == "RIS") a.remove_implicit = true;
      else if (name == "RPL") a.remove_product_layer = true;
      else if (name == "RPF") a.replace_with_fully_connected = true;
      else throw ConfigError("unknown ablation '" + std::string(name) + "' (expected RER, RIS, RPL or RPF)");
    }
    if (a.remove_product_layer && a.replace_with_fully_connected)
      throw ConfigError("RPL and RPF are mutually exclusive");
    return a;
  }

  std::string to_string() const {
    std::string out;
    auto add = [&out](bool on, const char* name) {
      if (!on) return;
      if (!out.empty()) out += ',';
      out += name;
    };
    add(remove_explicit, "RER");
    add(remove_implicit, "RIS");
    add(remove_product_layer, "RPL");
    add(replace_with_fully_connected, "RPF");
    return out;
  }

  bool operator==(const Ablation&) const = default;
};

enum class PairMode { kSampled, kFull };

struct PretrainConfig {
  std::size_t vertex_dim = 64;
  std::size_t embedding_dim = 128;
  double lambda = 0.5;
  double learning_rate = 0.001;
  std::size_t pair_batch_size = 256;
  std::size_t question_batch_size = 256;
  std::size_t epochs = 20;
  std::size_t neg_ratio = 1;
  double dropout_keep = 0.5;
  std::uint64_t seed = 0;
  Ablation ablation;
  PairMode pair_mode = PairMode::kSampled;
  /// Fraction of observed questions held out of L4 to pick the best epoch.
  double validation_fraction = 0.1;

  void validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
    if (vertex_dim < 1 || embedding_dim < 1) throw ConfigError("dimensions must be at least 1");
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) throw ConfigError("dropout_keep must lie in (0, 1]");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (pair_batch_size < 1 || question_batch_size < 1) throw ConfigError("batch sizes must be at least 1");
    if (neg_ratio < 1) throw ConfigError("neg_ratio must be at least 1");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
      throw ConfigError("validation_fraction must lie in [0, 1)");
  }
};

/// Everything the losses read besides the parameters.
struct PretrainInputs {
  BipartiteGraph graph;
  AttributeFeatures attributes;
  DifficultyVector difficulty;
  PairRelation explicit_pairs;
  SimilarityRelation question_pairs;
  SimilarityRelation skill_pairs;

  static PretrainInputs build(BipartiteGraph graph, AttributeFeatures attributes, DifficultyVector difficulty) {
    if (attributes.values.rows() != graph.num_questions || difficulty.size() != graph.num_questions)
      throw DataError("graph, attributes and difficulty disagree on the number of questions");
    for (std::size_t q = 0; q < graph.num_questions; ++q)
      if (graph.question_neighbors[q].empty())
        throw DataError("question " + std::to_string(q) + " has no skill neighbors");
    PretrainInputs in;
    in.explicit_pairs = explicit_relation(graph);
    in.question_pairs = question_similarity(graph);
    in.skill_pairs = skill_similarity(graph);
    in.graph = std::move(graph);
    in.attributes = std::move(attributes);
    in.difficulty = std::move(difficulty);
    return in;
  }

  /// Graph from every record of `full`; difficulty and attributes from
  /// `train` only.
  static PretrainInputs from_dataset(const InteractionDataset& full, const InteractionDataset& train,
                                     const std::vector<std::string>& attribute_features) {
    return build(build_graph(full), compute_attributes(train, attribute_features), compute_difficulty(train));
  }

  PebgShapes shapes(const PretrainConfig& c) const {
    return {graph.num_questions, graph.num_skills, c.vertex_dim, c.embedding_dim, attributes.width(),
            c.ablation.fusion()};
  }
};

/// One mini-batch for every loss term.
struct JointBatch {
  std::vector<LabeledPair> explicit_pairs;
  std::vector<LabeledPair> question_pairs;
  std::vector<LabeledPair> skill_pairs;
  std::vector<std::size_t> questions;
  Matrix dropout;  // questions.size() x output_dim, or empty
};

/// Per-term batch means and the weighted total.
struct LossReport {
  double explicit_loss = 0.0;             // L1
  double question_similarity_loss = 0.0;  // L2
  double skill_similarity_loss = 0.0;     // L3
  double difficulty_loss = 0.0;           // L4
  double total = 0.0;
};

/// Weighted joint objective on one batch. Each term is averaged over its own
/// batch before weighting. Ablated terms are skipped and reported as 0.
inline LossReport evaluate_joint(const PebgParameters& p, const JointBatch& batch, const PretrainInputs& in,
                                 const PretrainConfig& config, PebgParameters* grads) {
  LossReport r;
  const double lam = config.lambda;
  auto mean_scale = [](std::size_t n) { return n == 0 ? 0.0 : 1.0 / static_cast<double>(n); };

  if (!config.ablation.remove_explicit && !batch.explicit_pairs.empty()) {
    const double m = mean_scale(batch.explicit_pairs.size());
    r.explicit_loss = m * accumulate_explicit_loss(p, batch.explicit_pairs, lam * m, grads);
  }
  if (!config.ablation.remove_implicit) {
    if (!batch.question_pairs.empty()) {
      const double m = mean_scale(batch.question_pairs.size());
      r.question_similarity_loss =
          m * accumulate_similarity_loss(p, Side::kQuestion, batch.question_pairs, lam * m, grads);
    }
    if (!batch.skill_pairs.empty()) {
      const double m = mean_scale(batch.skill_pairs.size());
      r.skill_similarity_loss = m * accumulate_similarity_loss(p, Side::kSkill, batch.skill_pairs, lam * m, grads);
    }
  }
  if (!batch.questions.empty()) {
    const double m = mean_scale(batch.questions.size());
    r.difficulty_loss = m * accumulate_difficulty_loss(p, batch.questions, in.graph, in.attributes, in.difficulty,
                                                       batch.dropout, (1.0 - lam) * m, grads);
  }
  r.total = lam * (r.explicit_loss + r.question_similarity_loss + r.skill_similarity_loss) +
            (1.0 - lam) * r.difficulty_loss;
  return r;
}

inline void check_finite(const LossReport& r) {
  if (!std::isfinite(r.explicit_loss)) throw NumericalError("L1");
  if (!std::isfinite(r.question_similarity_loss)) throw NumericalError("L2");
  if (!std::isfinite(r.skill_similarity_loss)) throw NumericalError("L3");
  if (!std::isfinite(r.difficulty_loss)) throw NumericalError("L4");
  if (!std::isfinite(r.total)) throw NumericalError("total loss");
}

inline void check_finite(const PebgParameters& p) {
  for (const auto& [name, t] : p.tensors())
    if (!all_finite(t->values())) throw NumericalError("parameter " + std::string(name));
}

/// Produces successive joint batches. In sampled mode each graph term cycles
/// through its own sampling passes and L4 cycles through shuffled question
/// batches; in full mode every batch is the complete pair domain plus all
/// training questions.
class BatchSource {
 public:
  BatchSource(const PretrainInputs& in, const PretrainConfig& config, std::vector<std::size_t> train_questions)
      : config_(config),
        train_questions_(std::move(train_questions)),
        explicit_stream_(in.explicit_pairs, config.neg_ratio),
        question_stream_(in.question_pairs.pairs, config.neg_ratio),
        skill_stream_(in.skill_pairs.pairs, config.neg_ratio) {
    if (config.pair_mode == PairMode::kFull) {
      full_explicit_ = all_pairs(in.explicit_pairs);
      full_question_ = all_pairs(in.question_pairs.pairs);
      full_skill_ = all_pairs(in.skill_pairs.pairs);
    }
    const std::size_t edge_steps =
        (in.explicit_pairs.num_positive() * (1 + config.neg_ratio) + config.pair_batch_size - 1) /
        config.pair_batch_size;
    const std::size_t question_steps =
        (train_questions_.size() + config.question_batch_size - 1) / config.question_batch_size;
    steps_per_epoch_ = config.pair_mode == PairMode::kFull ? 1 : std::max<std::size_t>(1, std::max(edge_steps, question_steps));
  }

  std::size_t steps_per_epoch() const noexcept { return steps_per_epoch_; }

  JointBatch next(std::mt19937_64& rng) {
    JointBatch b;
    const bool use_explicit = !config_.ablation.remove_explicit;
    const bool use_implicit = !config_.ablation.remove_implicit;
    if (config_.pair_mode == PairMode::kFull) {
      if (use_explicit) b.explicit_pairs = full_explicit_;
      if (use_implicit) {
        b.question_pairs = full_question_;
        b.skill_pairs = full_skill_;
      }
      b.questions = train_questions_;
    } else {
      if (use_explicit) b.explicit_pairs = explicit_stream_.next(config_.pair_batch_size, rng);
      if (use_implicit) {
        b.question_pairs = question_stream_.next(config_.pair_batch_size, rng);
        b.skill_pairs = skill_stream_.next(config_.pair_batch_size, rng);
      }
      b.questions = next_questions(rng);
    }
    return b;
  }

 private:
  std::vector<std::size_t> next_questions(std::mt19937_64& rng) {
    std::vector<std::size_t> out;
    if (train_questions_.empty()) return out;
    while (out.size() < config_.question_batch_size && out.size() < train_questions_.size()) {
      if (question_cursor_ == question_order_.size()) {
        question_order_ = train_questions_;
        std::shuffle(question_order_.begin(), question_order_.end(), rng);
        question_cursor_ = 0;
      }
      out.push_back(question_order_[question_cursor_++]);
    }
    return out;
  }

  PretrainConfig config_;
  std::vector<std::size_t> train_questions_;
  PairStream explicit_stream_;
  PairStream question_stream_;
  PairStream skill_stream_;
  std::vector<LabeledPair> full_explicit_, full_question_, full_skill_;
  std::vector<std::size_t> question_order_;
  std::size_t question_cursor_ = 0;
  std::size_t steps_per_epoch_ = 1;
};

inline Matrix sample_dropout(std::size_t rows, std::size_t cols, double keep, std::mt19937_64& rng) {
  if (keep >= 1.0 || rows == 0) return {};
  Matrix m(rows, cols);
  std::bernoulli_distribution coin(keep);
  for (double& v : m.values()) v = coin(rng) ? 1.0 / keep : 0.0;
  return m;
}

/// One Adam step on one joint batch.
inline LossReport joint_step(PebgParameters& params, Adam& optimizer, const PretrainInputs& in,
                             const PretrainConfig& config, BatchSource& source, std::mt19937_64& rng,
                             PebgParameters& grads) {
  JointBatch batch = source.next(rng);
  batch.dropout = sample_dropout(batch.questions.size(), params.shapes.output_dim(), config.dropout_keep, rng);
  grads.set_zero();
  const LossReport report = evaluate_joint(params, batch, in, config, &grads);
  check_finite(report);

  std::vector<Matrix*> ps;
  std::vector<const Matrix*> gs;
  for (auto& [name, t] : params.tensors()) ps.push_back(t);
  for (auto& [name, t] : grads.tensors()) gs.push_back(t);
  optimizer.step(ps, gs);
  check_finite(params);
  return report;
}

// ---------------------------------------------------------------------------
// Embedding table

struct QuestionEmbeddingTable {
  Matrix embeddings;  // |Q| x d, row i belongs to question_ids.name(i)
  IdMap question_ids;

  std::size_t dim() const noexcept { return embeddings.cols(); }
  bool operator==(const QuestionEmbeddingTable& o) const {
    return embeddings == o.embeddings && question_ids == o.question_ids;
  }
};

/// Deterministic forward pass (no dropout) for every question.
inline Matrix compute_embeddings(const PebgParameters& p, const PretrainInputs& in) {
  Matrix out(p.shapes.num_questions, p.shapes.output_dim());
  for (std::size_t q = 0; q < p.shapes.num_questions; ++q) {
    auto act = forward_embedding(p, q, in.graph, in.attributes);
    std::copy(act.embedding.begin(), act.embedding.end(), out.row(q).begin());
  }
  return out;
}

/// Text format: `<num_questions> <d>` then `<raw id> v1 ... vd` per question.
inline void write_embeddings(std::ostream& out, const QuestionEmbeddingTable& t) {
  out << t.embeddings.rows() << ' ' << t.dim() << '\n';
  for (std::size_t q = 0; q < t.embeddings.rows(); ++q) {
    out << t.question_ids.name(q);
    for (double v : t.embeddings.row(q)) out << ' ' << detail::format_double(v);
    out << '\n';
  }
}

inline QuestionEmbeddingTable read_embeddings(std::istream& in) {
  QuestionEmbeddingTable t;
  std::size_t n = 0, d = 0;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "empty embedding file");
  {
    std::istringstream head(line);
    if (!(head >> n >> d)) throw ParseError(1, "expected '<num_questions> <d>'");
  }
  t.embeddings = Matrix(n, d);
  for (std::size_t q = 0; q < n; ++q) {
    if (!std::getline(in, line)) throw ParseError(q + 2, "missing embedding row");
    std::istringstream row(line);
    std::string id;
    row >> id;
    if (t.question_ids.intern(id) != q) throw ParseError(q + 2, "duplicate question id " + id);
    for (std::size_t k = 0; k < d; ++k) {
      std::string tok;
      if (!(row >> tok)) throw ParseError(q + 2, "too few values");
      auto v = detail::parse_double(tok);
      if (!v) throw ParseError(q + 2, "bad value '" + tok + "'");
      t.embeddings(q, k) = *v;
    }
    std::string extra;
    if (row >> extra) throw ParseError(q + 2, "too many values");
  }
  return t;
}

inline void save_embeddings(const std::string& path, const QuestionEmbeddingTable& t) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  write_embeddings(out, t);
}

inline QuestionEmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_embeddings(in);
}

/// Rows of `t` reordered to follow `ids`; every id must be present.
inline Matrix align_embeddings(const QuestionEmbeddingTable& t, const IdMap& ids) {
  Matrix out(ids.size(), t.dim());
  for (std::size_t q = 0; q < ids.size(); ++q) {
    auto src = t.question_ids.find(ids.name(q));
    if (!src) throw DataError("no embedding for question " + ids.name(q));
    std::copy(t.embeddings.row(*src).begin(), t.embeddings.row(*src).end(), out.row(q).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochLoss {
  std::size_t epoch = 0;
  LossReport mean;  // per-step means averaged over the epoch
  double validation_loss = 0.0;  // L4 on held-out questions; 0 when none
};

struct PretrainResult {
  PebgParameters params;
  QuestionEmbeddingTable table;
  std::vector<EpochLoss> curve;
  std::size_t best_epoch = 0;  // 0: initial or final parameters were kept
};

/// Observed questions split into (training, validation) for L4.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> difficulty_holdout(
    const DifficultyVector& d, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> observed;
  for (std::size_t q = 0; q < d.size(); ++q)
    if (d.observed[q]) observed.push_back(q);
  if (fraction <= 0.0 || observed.size() < 2) return {observed, {}};
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::shuffle(observed.begin(), observed.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(observed.size())));
  n_val = std::min(n_val, observed.size() - 1);
  std::vector<std::size_t> val(observed.end() - static_cast<std::ptrdiff_t>(n_val), observed.end());
  observed.resize(observed.size() - n_val);
  std::sort(observed.begin(), observed.end());
  std::sort(val.begin(), val.end());
  return {observed, val};
}

using EpochCallback = std::function<void(const EpochLoss&)>;

/// Runs `config.epochs` epochs of joint steps. With a validation hold-out,
/// the parameters of the epoch with the lowest held-out L4 are kept.
inline PretrainResult pretrain(const PretrainInputs& in, const PretrainConfig& config, const IdMap& question_ids,
                               const EpochCallback& on_epoch = {}) {
  config.validate();
  if (question_ids.size() != in.graph.num_questions) throw DataError("question id map size mismatch");
  PretrainResult result;
  PebgParameters params = init_parameters(in.shapes(config), config.seed);
  PebgParameters grads = PebgParameters::zeros(params.shapes);
  Adam optimizer(AdamOptions{config.learning_rate});
  std::mt19937_64 rng(config.seed + 1);

  auto [train_q, val_q] = difficulty_holdout(in.difficulty, config.validation_fraction, config.seed);
  BatchSource source(in, config, train_q);

  std::optional<PebgParameters> best;
  double best_val = 0.0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochLoss e;
    e.epoch = epoch;
    const std::size_t steps = source.steps_per_epoch();
    for (std::size_t s = 0; s < steps; ++s) {
      const LossReport r = joint_step(params, optimizer, in, config, source, rng, grads);
      e.mean.explicit_loss += r.explicit_loss / static_cast<double>(steps);
      e.mean.question_similarity_loss += r.question_similarity_loss / static_cast<double>(steps);
      e.mean.skill_similarity_loss += r.skill_similarity_loss / static_cast<double>(steps);
      e.mean.difficulty_loss += r.difficulty_loss / static_cast<double>(steps);
      e.mean.total += r.total / static_cast<double>(steps);
    }
    if (!val_q.empty()) {
      e.validation_loss = accumulate_difficulty_loss(params, val_q, in.graph, in.attributes, in.difficulty, Matrix{},
                                                     0.0, nullptr) /
                          static_cast<double>(val_q.size());
      if (!std::isfinite(e.validation_loss)) throw NumericalError("validation L4");
      if (!best || e.validation_loss < best_val) {
        best = params;
        best_val = e.validation_loss;
        result.best_epoch = epoch;
      }
    }
    result.curve.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  if (best) params = std::move(*best);

  result.table.embeddings = compute_embeddings(params, in);
  result.table.question_ids = question_ids;
  result.params = std::move(params);
  return result;
}

inline void write_loss_curve(std::ostream& out, const std::vector<EpochLoss>& curve) {
  out << "epoch,L1,L2,L3,L4,total\n";
  for (const auto& e : curve) {
    out << e.epoch << ',' << detail::format_double(e.mean.explicit_loss) << ','
        << detail::format_double(e.mean.question_similarity_loss) << ','
        << detail::format_double(e.mean.skill_similarity_loss) << ','
        << detail::format_double(e.mean.difficulty_loss) << ',' << detail::format_double(e.mean.total) << '\n';
  }
}

}  // namespace pebg
