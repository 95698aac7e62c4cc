#pragma once

// Recurrent knowledge tracing on top of a question (or skill) embedding table.
// The cell is a GRU; the prediction for the next question is a dot product
// between a projection of the hidden state and that question's embedding,
// plus a per-question bias.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "pebg/adam.hpp"
#include "pebg/dataset.hpp"
#include "pebg/error.hpp"
#include "pebg/metrics.hpp"
#include "pebg/tensor.hpp"

namespace pebg {

inline constexpr int kKtModelFormatVersion = 1;

enum class KtMode { kPretrainedFrozen, kPretrainedFinetune, kRawQuestion, kRawSkill };

inline const char* to_string(KtMode m) {
  switch (m) {
    case KtMode::kPretrainedFrozen: return "pretrained_frozen";
    case KtMode::kPretrainedFinetune: return "pretrained_finetune";
    case KtMode::kRawQuestion: return "raw_question";
    case KtMode::kRawSkill: return "raw_skill";
  }
  return "?";
}

inline KtMode parse_kt_mode(const std::string& s) {
  for (KtMode m : {KtMode::kPretrainedFrozen, KtMode::kPretrainedFinetune, KtMode::kRawQuestion, KtMode::kRawSkill})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown KT mode '" + s + "'");
}

inline bool uses_pretrained(KtMode m) { return m == KtMode::kPretrainedFrozen || m == KtMode::kPretrainedFinetune; }

struct KtConfig {
  std::size_t hidden_dim = 128;
  /// Table width in raw_question mode; other modes take it from the table.
  std::size_t embedding_dim = 128;
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::size_t max_seq_len = 200;
  std::size_t epochs = 20;
  double dropout_keep = 0.5;
  std::uint64_t seed = 0;
  /// Share of training students used for early stopping.
  double validation_fraction = 0.1;
  /// Epochs without a better validation AUC before stopping; 0 disables.
  std::size_t patience = 5;
  std::size_t threads = 1;

  void validate() const {
    if (hidden_dim < 1 || embedding_dim < 1) throw ConfigError("kt dimensions must be at least 1");
    if (max_seq_len < 2) throw ConfigError("kt.max_seq_len must be at least 2");
    if (batch_size < 1) throw ConfigError("kt.batch_size must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("kt.learning_rate must be positive");
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) throw ConfigError("kt.dropout_keep must lie in (0, 1]");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
      throw ConfigError("kt.validation_fraction must lie in [0, 1)");
    if (threads < 1) throw ConfigError("threads must be at least 1");
  }
};

/// [e; 0] for an incorrect answer, [0; e] for a correct one.
inline std::vector<double> build_input(std::span<const double> e, bool correct) {
  std::vector<double> x(2 * e.size(), 0.0);
  std::copy(e.begin(), e.end(), x.begin() + (correct ? static_cast<std::ptrdiff_t>(e.size()) : 0));
  return x;
}

struct KtParameters {
  Matrix table;      // items x d
  Matrix item_bias;  // 1 x items
  Matrix w_x;        // 3h x 2d, gate rows ordered reset, update, candidate
  Matrix w_h;        // 3h x h
  Matrix b_x;        // 1 x 3h
  Matrix b_h;        // 1 x 3h
  Matrix w_o;        // d x h
  Matrix b_o;        // 1 x d

  std::size_t dim() const noexcept { return table.cols(); }
  std::size_t hidden() const noexcept { return w_h.cols(); }

  static KtParameters zeros(std::size_t items, std::size_t d, std::size_t h) {
    return {Matrix(items, d), Matrix(1, items), Matrix(3 * h, 2 * d), Matrix(3 * h, h),
            Matrix(1, 3 * h),  Matrix(1, 3 * h), Matrix(d, h),          Matrix(1, d)};
  }
  static KtParameters zeros_like(const KtParameters& p) { return zeros(p.table.rows(), p.dim(), p.hidden()); }

  std::vector<std::pair<std::string_view, Matrix*>> tensors() {
    return {{"table", &table}, {"item_bias", &item_bias}, {"w_x", &w_x}, {"w_h", &w_h},
            {"b_x", &b_x},     {"b_h", &b_h},             {"w_o", &w_o}, {"b_o", &b_o}};
  }
  std::vector<std::pair<std::string_view, const Matrix*>> tensors() const {
    return {{"table", &table}, {"item_bias", &item_bias}, {"w_x", &w_x}, {"w_h", &w_h},
            {"b_x", &b_x},     {"b_h", &b_h},             {"w_o", &w_o}, {"b_o", &b_o}};
  }
  void set_zero() {
    for (auto& [n, t] : tensors()) t->fill(0.0);
  }
  bool operator==(const KtParameters&) const = default;
};

struct KtModel {
  KtMode mode = KtMode::kRawQuestion;
  KtParameters params;
  /// Table rows averaged to form each question's embedding.
  std::vector<std::vector<std::uint32_t>> question_items;
  std::vector<std::string> question_ids;
  std::vector<std::string> item_ids;
  /// Student split the model was trained under, so evaluation can recover
  /// the matching test students.
  std::uint64_t split_seed = 0;
  double train_fraction = 0.8;

  bool table_trainable() const noexcept {
    return mode == KtMode::kPretrainedFinetune || mode == KtMode::kRawQuestion;
  }
  std::size_t num_questions() const noexcept { return question_items.size(); }

  void embed(std::size_t q, std::span<double> out) const {
    if (q >= question_items.size()) throw DataError("question index " + std::to_string(q) + " out of range");
    std::fill(out.begin(), out.end(), 0.0);
    const auto& items = question_items[q];
    for (auto i : items) axpy(1.0 / static_cast<double>(items.size()), params.table.row(i), out);
  }
  double bias(std::size_t q) const {
    double b = 0.0;
    for (auto i : question_items[q]) b += params.item_bias(0, i);
    return b / static_cast<double>(question_items[q].size());
  }
};

/// Table rows per question: the question itself, or its skills in raw_skill
/// mode.
inline std::vector<std::vector<std::uint32_t>> question_items_for(const InteractionDataset& ds, KtMode mode) {
  std::vector<std::vector<std::uint32_t>> items(ds.num_questions);
  if (mode != KtMode::kRawSkill) {
    for (std::size_t q = 0; q < ds.num_questions; ++q) items[q] = {static_cast<std::uint32_t>(q)};
    return items;
  }
  for (const auto& st : ds.students)
    for (const auto& r : st.records)
      if (items[r.question_index].empty())
        for (auto s : r.skill_indices) items[r.question_index].push_back(static_cast<std::uint32_t>(s));
  for (std::size_t q = 0; q < ds.num_questions; ++q)
    if (items[q].empty()) throw DataError("question " + ds.question_ids.name(q) + " has no recorded skills");
  return items;
}

/// Table for `mode`: `pretrained` (rows aligned to the dataset's questions)
/// in the pretrained modes, an identity over skills in raw_skill mode, and
/// uniform(-1/sqrt(d), 1/sqrt(d)) draws in raw_question mode. Recurrent and
/// output weights are uniform(-1/sqrt(h), 1/sqrt(h)); biases start at zero.
inline KtModel init_kt_model(const InteractionDataset& ds, KtMode mode, const KtConfig& config,
                             const Matrix* pretrained = nullptr) {
  config.validate();
  KtModel m;
  m.mode = mode;
  m.question_items = question_items_for(ds, mode);
  m.question_ids = ds.question_ids.names();
  std::mt19937_64 rng(config.seed);
  Matrix table;
  if (uses_pretrained(mode)) {
    if (!pretrained) throw ConfigError(std::string(to_string(mode)) + " mode needs an embedding table");
    if (pretrained->rows() != ds.num_questions) throw DataError("embedding table does not cover every question");
    table = *pretrained;
    m.item_ids = m.question_ids;
  } else if (mode == KtMode::kRawSkill) {
    table = Matrix(ds.num_skills, ds.num_skills);
    for (std::size_t s = 0; s < ds.num_skills; ++s) table(s, s) = 1.0;
    m.item_ids = ds.skill_ids.names();
  } else {
    table = Matrix(ds.num_questions, config.embedding_dim);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(config.embedding_dim));
    for (double& v : table.values()) v = bound * u(rng);
    m.item_ids = m.question_ids;
  }
  const std::size_t d = table.cols(), h = config.hidden_dim;
  m.params = KtParameters::zeros(table.rows(), d, h);
  m.params.table = std::move(table);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  for (Matrix* t : {&m.params.w_x, &m.params.w_h, &m.params.w_o})
    for (double& v : t->values()) v = bound * u(rng);
  return m;
}

// ---------------------------------------------------------------------------
// Forward and backward over one chunk of records

/// Cached activations of one step. The input is the embedding `e` placed at
/// column `offset` of an otherwise zero vector of width 2d.
struct GruStep {
  std::vector<double> e;
  std::size_t offset = 0;
  std::vector<double> h_prev, r, z, n, hn, h;
};

/// One GRU step: r, z from sigmoid gates, n = tanh(Wx_n x + b + r * (Wh_n h + b)),
/// h' = (1 - z) * n + z * h.
inline void gru_forward(const KtParameters& p, GruStep& s) {
  const std::size_t h = p.hidden();
  std::vector<double> ax(3 * h), ah(3 * h);
  for (std::size_t k = 0; k < 3 * h; ++k) ax[k] = dot(p.w_x.row(k).subspan(s.offset, s.e.size()), s.e);
  matvec(p.w_h, s.h_prev, ah);
  s.r.resize(h);
  s.z.resize(h);
  s.n.resize(h);
  s.hn.resize(h);
  s.h.resize(h);
  for (std::size_t k = 0; k < h; ++k) {
    s.r[k] = sigmoid(ax[k] + p.b_x(0, k) + ah[k] + p.b_h(0, k));
    s.z[k] = sigmoid(ax[h + k] + p.b_x(0, h + k) + ah[h + k] + p.b_h(0, h + k));
    s.hn[k] = ah[2 * h + k] + p.b_h(0, 2 * h + k);
    s.n[k] = std::tanh(ax[2 * h + k] + p.b_x(0, 2 * h + k) + s.r[k] * s.hn[k]);
    s.h[k] = (1.0 - s.z[k]) * s.n[k] + s.z[k] * s.h_prev[k];
  }
}

/// Adds parameter gradients for one step given dL/dh'; returns dL/dh and
/// writes dL/de (the nonzero block of dL/dx) into `de`.
inline std::vector<double> gru_backward(const KtParameters& p, const GruStep& s, std::span<const double> dh,
                                        KtParameters& g, std::span<double> de) {
  const std::size_t h = p.hidden();
  std::vector<double> dax(3 * h), dah(3 * h), dh_prev(h);
  for (std::size_t k = 0; k < h; ++k) {
    const double dn = dh[k] * (1.0 - s.z[k]);
    const double dz = dh[k] * (s.h_prev[k] - s.n[k]);
    dh_prev[k] = dh[k] * s.z[k];
    const double dan = dn * (1.0 - s.n[k] * s.n[k]);
    const double dr = dan * s.hn[k];
    dax[k] = dah[k] = dr * s.r[k] * (1.0 - s.r[k]);
    dax[h + k] = dah[h + k] = dz * s.z[k] * (1.0 - s.z[k]);
    dax[2 * h + k] = dan;
    dah[2 * h + k] = dan * s.r[k];
  }
  const std::size_t d = s.e.size();
  std::fill(de.begin(), de.end(), 0.0);
  for (std::size_t k = 0; k < 3 * h; ++k) {
    if (dax[k] == 0.0) continue;
    axpy(dax[k], s.e, g.w_x.row(k).subspan(s.offset, d));
    axpy(dax[k], p.w_x.row(k).subspan(s.offset, d), de);
  }
  outer_add(dah, s.h_prev, g.w_h);
  axpy(1.0, dax, g.b_x.row(0));
  axpy(1.0, dah, g.b_h.row(0));
  matvec_transpose_add(p.w_h, dah, dh_prev);
  return dh_prev;
}

struct ChunkResult {
  std::vector<double> probabilities;  // one per record after the first
  double loss = 0.0;                  // summed binary cross-entropy
};

/// Runs the model over `records` from a zero state. With `grads`, adds
/// `scale` times the gradient of the summed loss. `dropout` holds one row of
/// inverted-dropout multipliers per prediction (empty: none).
inline ChunkResult run_chunk(const KtModel& m, std::span<const InteractionRecord> records, const Matrix& dropout,
                             KtParameters* grads, double scale) {
  const auto& p = m.params;
  const std::size_t d = p.dim(), h = p.hidden(), n = records.size();
  ChunkResult out;
  if (n < 2) return out;
  std::vector<GruStep> steps(n - 1);
  std::vector<std::vector<double>> emb(n, std::vector<double>(d)), proj(n - 1, std::vector<double>(d)),
      hidden(n - 1, std::vector<double>(h));
  std::vector<double> logits(n - 1);
  for (std::size_t t = 0; t < n; ++t) m.embed(records[t].question_index, emb[t]);
  std::vector<double> state(h, 0.0);
  for (std::size_t t = 0; t + 1 < n; ++t) {
    GruStep& s = steps[t];
    s.e = emb[t];
    s.offset = records[t].correct ? d : 0;
    s.h_prev = state;
    gru_forward(p, s);
    state = s.h;
    for (std::size_t k = 0; k < h; ++k) hidden[t][k] = dropout.empty() ? s.h[k] : s.h[k] * dropout(t, k);
    matvec(p.w_o, hidden[t], proj[t]);
    axpy(1.0, p.b_o.row(0), proj[t]);
    const std::size_t next = records[t + 1].question_index;
    logits[t] = dot(proj[t], emb[t + 1]) + m.bias(next);
    out.probabilities.push_back(sigmoid(logits[t]));
    out.loss += bce_with_logit(logits[t], records[t + 1].correct ? 1.0 : 0.0);
  }
  if (!grads) return out;

  auto add_embedding_grad = [&](std::size_t q, std::span<const double> de) {
    if (!m.table_trainable()) return;
    const auto& items = m.question_items[q];
    for (auto i : items) axpy(1.0 / static_cast<double>(items.size()), de, grads->table.row(i));
  };
  std::vector<double> dh(h, 0.0), dx(d), du(d), dhid(h), de(d);
  for (std::size_t t = n - 1; t-- > 0;) {
    const std::size_t next = records[t + 1].question_index;
    const double dlogit = scale * (sigmoid(logits[t]) - (records[t + 1].correct ? 1.0 : 0.0));
    for (auto i : m.question_items[next])
      grads->item_bias(0, i) += dlogit / static_cast<double>(m.question_items[next].size());
    for (std::size_t k = 0; k < d; ++k) {
      du[k] = dlogit * emb[t + 1][k];
      de[k] = dlogit * proj[t][k];
    }
    add_embedding_grad(next, de);
    outer_add(du, hidden[t], grads->w_o);
    axpy(1.0, du, grads->b_o.row(0));
    std::fill(dhid.begin(), dhid.end(), 0.0);
    matvec_transpose_add(p.w_o, du, dhid);
    for (std::size_t k = 0; k < h; ++k) dh[k] += dropout.empty() ? dhid[k] : dhid[k] * dropout(t, k);
    dh = gru_backward(p, steps[t], dh, *grads, dx);
    add_embedding_grad(records[t].question_index, dx);
  }
  return out;
}

/// Consecutive pieces of at most `max_len` records; pieces shorter than two
/// records carry no prediction and are dropped.
struct Chunk {
  std::size_t student = 0;
  std::span<const InteractionRecord> records;
};

inline std::vector<Chunk> make_chunks(const InteractionDataset& ds, const std::vector<std::size_t>& students,
                                      std::size_t max_len) {
  std::vector<Chunk> out;
  for (std::size_t s : students) {
    std::span<const InteractionRecord> all = ds.students[s].records;
    for (std::size_t start = 0; start < all.size(); start += max_len) {
      auto piece = all.subspan(start, std::min(max_len, all.size() - start));
      if (piece.size() >= 2) out.push_back({s, piece});
    }
  }
  return out;
}

/// Pooled predictions for every step of `students`, chunked as in training.
inline PredictionSet predict(const KtModel& m, const InteractionDataset& ds, const std::vector<std::size_t>& students,
                             std::size_t max_len) {
  PredictionSet out;
  for (const auto& c : make_chunks(ds, students, max_len)) {
    auto r = run_chunk(m, c.records, Matrix{}, nullptr, 0.0);
    for (std::size_t t = 0; t < r.probabilities.size(); ++t)
      out.push_back({r.probabilities[t], c.records[t + 1].correct, c.student, c.records[t + 1].question_index});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct KtEpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per prediction
  std::optional<double> validation_auc;
};

struct KtTrainResult {
  KtModel model;
  std::vector<KtEpochLog> log;
  std::size_t best_epoch = 0;
};

inline std::vector<Matrix*> trainable(KtModel& m, KtParameters& p) {
  std::vector<Matrix*> out;
  for (auto& [name, t] : p.tensors())
    if (m.table_trainable() || name != "table") out.push_back(t);
  return out;
}

inline void check_finite(const KtParameters& p) {
  for (const auto& [name, t] : p.tensors())
    if (!all_finite(t->values())) throw NumericalError("kt parameter " + std::string(name));
}

/// Trains on `train_students` of `ds`; a `validation_fraction` share of them
/// is held out to keep the parameters of the epoch with the best AUC.
inline KtTrainResult train_kt(KtModel model, const InteractionDataset& ds, std::vector<std::size_t> train_students,
                              const KtConfig& config,
                              const std::function<void(const KtEpochLog&)>& on_epoch = {}) {
  config.validate();
  if (train_students.empty()) throw DataError("no training students");
  std::mt19937_64 rng(config.seed + 1);
  std::vector<std::size_t> val_students;
  if (config.validation_fraction > 0.0 && train_students.size() >= 2) {
    std::shuffle(train_students.begin(), train_students.end(), rng);
    auto n_val = static_cast<std::size_t>(
        std::llround(config.validation_fraction * static_cast<double>(train_students.size())));
    n_val = std::min(n_val, train_students.size() - 1);
    val_students.assign(train_students.end() - static_cast<std::ptrdiff_t>(n_val), train_students.end());
    train_students.resize(train_students.size() - n_val);
    std::sort(val_students.begin(), val_students.end());
    std::sort(train_students.begin(), train_students.end());
  }
  auto chunks = make_chunks(ds, train_students, config.max_seq_len);
  if (chunks.empty()) throw DataError("no training sequence has two or more records");

  const std::size_t h = model.params.hidden();
  KtTrainResult result;
  Adam optimizer(AdamOptions{config.learning_rate});
  std::vector<KtParameters> grads(std::min(config.threads, config.batch_size), KtParameters::zeros_like(model.params));
  std::optional<KtModel> best;
  double best_auc = -1.0;
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(chunks.begin(), chunks.end(), rng);
    KtEpochLog log;
    log.epoch = epoch;
    std::size_t predictions = 0;
    for (std::size_t start = 0; start < chunks.size(); start += config.batch_size) {
      const std::size_t end = std::min(chunks.size(), start + config.batch_size);
      std::size_t batch_predictions = 0;
      std::vector<Matrix> masks;
      for (std::size_t c = start; c < end; ++c) {
        const std::size_t steps = chunks[c].records.size() - 1;
        batch_predictions += steps;
        Matrix mask;
        if (config.dropout_keep < 1.0) {
          mask = Matrix(steps, h);
          std::bernoulli_distribution keep(config.dropout_keep);
          for (double& v : mask.values()) v = keep(rng) ? 1.0 / config.dropout_keep : 0.0;
        }
        masks.push_back(std::move(mask));
      }
      const double scale = 1.0 / static_cast<double>(batch_predictions);
      // Contiguous blocks per worker, reduced in worker order.
      const std::size_t workers = std::min(grads.size(), end - start);
      std::vector<double> losses(workers, 0.0);
      auto work = [&](std::size_t w) {
        grads[w].set_zero();
        const std::size_t lo = start + (end - start) * w / workers, hi = start + (end - start) * (w + 1) / workers;
        for (std::size_t c = lo; c < hi; ++c)
          losses[w] += run_chunk(model, chunks[c].records, masks[c - start], &grads[w], scale).loss;
      };
      if (workers == 1) {
        work(0);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
        for (std::size_t w = 1; w < workers; ++w) {
          auto dst = grads[0].tensors();
          auto src = grads[w].tensors();
          for (std::size_t k = 0; k < dst.size(); ++k) axpy(1.0, src[k].second->values(), dst[k].second->values());
        }
      }
      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      if (!std::isfinite(batch_loss)) throw NumericalError("kt loss");
      log.train_loss += batch_loss;
      predictions += batch_predictions;
      auto params = trainable(model, model.params);
      auto g_all = trainable(model, grads[0]);
      std::vector<const Matrix*> g(g_all.begin(), g_all.end());
      optimizer.step(params, g);
      check_finite(model.params);
    }
    log.train_loss /= static_cast<double>(predictions);
    if (!val_students.empty()) {
      auto preds = predict(model, ds, val_students, config.max_seq_len);
      try {
        log.validation_auc = auc(preds);
      } catch (const DataError&) {
      }
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (log.validation_auc) {
      if (*log.validation_auc > best_auc) {
        best_auc = *log.validation_auc;
        best = model;
        result.best_epoch = epoch;
        stale = 0;
      } else if (config.patience > 0 && ++stale >= config.patience) {
        break;
      }
    }
  }
  result.model = best ? std::move(*best) : std::move(model);
  return result;
}

// ---------------------------------------------------------------------------
// Model file: a text header followed by every tensor with its shape.

inline void write_kt_model(std::ostream& out, const KtModel& m) {
  out << "pebg-kt-model " << kKtModelFormatVersion << '\n';
  out << "mode " << to_string(m.mode) << '\n';
  out << "split " << m.split_seed << ' ' << detail::format_double(m.train_fraction) << '\n';
  out << "questions " << m.question_ids.size() << '\n';
  for (std::size_t q = 0; q < m.question_ids.size(); ++q) {
    out << m.question_ids[q];
    for (auto i : m.question_items[q]) out << ' ' << i;
    out << '\n';
  }
  out << "items " << m.item_ids.size() << '\n';
  for (const auto& id : m.item_ids) out << id << '\n';
  for (const auto& [name, t] : m.params.tensors()) {
    out << "tensor " << name << ' ' << t->rows() << ' ' << t->cols() << '\n';
    for (std::size_t r = 0; r < t->rows(); ++r) {
      for (std::size_t c = 0; c < t->cols(); ++c) out << (c ? " " : "") << detail::format_double((*t)(r, c));
      out << '\n';
    }
  }
}

inline KtModel read_kt_model(std::istream& in) {
  std::size_t line_no = 0;
  std::string line;
  auto next = [&]() -> std::istringstream {
    if (!std::getline(in, line)) throw ParseError(line_no + 1, "unexpected end of model file");
    ++line_no;
    return std::istringstream(line);
  };
  auto expect = [&](std::istringstream& s, const std::string& key) {
    std::string k;
    if (!(s >> k) || k != key) throw ParseError(line_no, "expected '" + key + "'");
  };
  KtModel m;
  {
    auto s = next();
    int version = 0;
    expect(s, "pebg-kt-model");
    if (!(s >> version) || version != kKtModelFormatVersion)
      throw ParseError(line_no, "unsupported model format version");
  }
  {
    auto s = next();
    std::string mode;
    expect(s, "mode");
    s >> mode;
    m.mode = parse_kt_mode(mode);
  }
  {
    auto s = next();
    expect(s, "split");
    if (!(s >> m.split_seed >> m.train_fraction)) throw ParseError(line_no, "bad split line");
  }
  std::size_t nq = 0, ni = 0;
  {
    auto s = next();
    expect(s, "questions");
    if (!(s >> nq)) throw ParseError(line_no, "bad question count");
  }
  for (std::size_t q = 0; q < nq; ++q) {
    auto s = next();
    std::string id;
    s >> id;
    m.question_ids.push_back(id);
    m.question_items.emplace_back();
    std::uint32_t i = 0;
    while (s >> i) m.question_items.back().push_back(i);
    if (m.question_items.back().empty()) throw ParseError(line_no, "question without table rows");
  }
  {
    auto s = next();
    expect(s, "items");
    if (!(s >> ni)) throw ParseError(line_no, "bad item count");
  }
  for (std::size_t i = 0; i < ni; ++i) m.item_ids.push_back(next().str());
  for (auto& [name, t] : m.params.tensors()) {
    auto s = next();
    std::size_t rows = 0, cols = 0;
    expect(s, "tensor");
    std::string got;
    if (!(s >> got >> rows >> cols) || got != name) throw ParseError(line_no, "expected tensor " + std::string(name));
    *t = Matrix(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      auto row = next();
      for (std::size_t c = 0; c < cols; ++c) {
        std::string tok;
        if (!(row >> tok)) throw ParseError(line_no, "too few values");
        auto v = detail::parse_double(tok);
        if (!v) throw ParseError(line_no, "bad value '" + tok + "'");
        (*t)(r, c) = *v;
      }
    }
  }
  const auto& p = m.params;
  const std::size_t d = p.dim(), h = p.hidden();
  if (p.table.rows() != ni || p.item_bias.cols() != ni || p.w_x.rows() != 3 * h || p.w_x.cols() != 2 * d ||
      p.b_x.cols() != 3 * h || p.b_h.cols() != 3 * h || p.w_o.rows() != d || p.w_o.cols() != h || p.b_o.cols() != d)
    throw ParseError(line_no, "tensor shapes are inconsistent");
  for (const auto& items : m.question_items)
    for (auto i : items)
      if (i >= ni) throw ParseError(line_no, "table row out of range");
  return m;
}

inline void save_kt_model(const std::string& path, const KtModel& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  write_kt_model(out, m);
}

inline KtModel load_kt_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_kt_model(in);
}

/// Checks that `ds` has the question vocabulary the model was trained on.
inline void check_vocabulary(const KtModel& m, const InteractionDataset& ds) {
  if (ds.question_ids.names() != m.question_ids)
    throw DataError("dataset questions do not match the model's question vocabulary");
}

}  // namespace pebg
