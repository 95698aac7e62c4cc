#pragma once

// Trainable parameters of the question-embedding pre-training model, the
// product-layer forward/backward pass and the four loss terms.
//
// Per question q with skill set C and raw attribute vector f:
//   a  = W_a f + b_a                      attribute projection
//   s' = mean_{j in C} s_j                averaged skill feature
//   z  = (q, s', a)                       three d_v-dim fields
//   l_z[k] = <W_z[k], z>                  linear signal
//   l_p[k] = sum_ij t_ki t_kj <z_i, z_j> = |sum_i t_ki z_i|^2
//   e  = ReLU(l_z + l_p + b)              question embedding
//   d^ = w_d . e + b_d                    difficulty head

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pebg/dataset.hpp"
#include "pebg/error.hpp"
#include "pebg/graph.hpp"
#include "pebg/tensor.hpp"

namespace pebg {

inline constexpr std::size_t kNumFields = 3;

/// How the three fields are fused into the exported embedding.
enum class FusionMode {
  kProduct,         // product layer (full model)
  kConcatenate,     // e = [q; s'; a], no fusion layer
  kFullyConnected,  // e = ReLU(W z + b), quadratic path removed
};

struct PebgShapes {
  std::size_t num_questions = 0;
  std::size_t num_skills = 0;
  std::size_t vertex_dim = 64;
  std::size_t embedding_dim = 128;
  std::size_t attribute_dim = 0;
  FusionMode fusion = FusionMode::kProduct;

  /// Width of e, which is also the difficulty head's input width.
  std::size_t output_dim() const {
    return fusion == FusionMode::kConcatenate ? kNumFields * vertex_dim : embedding_dim;
  }
};

struct PebgParameters {
  PebgShapes shapes;
  Matrix question_features;  // |Q| x d_v
  Matrix skill_features;     // |S| x d_v
  Matrix attribute_weight;   // d_v x m
  Matrix attribute_bias;     // 1 x d_v
  Matrix linear_weight;      // d x 3 d_v, row k is W_z[k] laid out as [q | s' | a]
  Matrix quadratic_factor;   // d x 3, row k is theta[k]
  Matrix product_bias;       // 1 x d
  Matrix difficulty_weight;  // 1 x output_dim
  Matrix difficulty_bias;    // 1 x 1

  /// Same shapes, all zeros (used as a gradient accumulator).
  static PebgParameters zeros(const PebgShapes& s) {
    PebgParameters p;
    p.shapes = s;
    const std::size_t dv = s.vertex_dim;
    p.question_features = Matrix(s.num_questions, dv);
    p.skill_features = Matrix(s.num_skills, dv);
    p.attribute_weight = Matrix(dv, s.attribute_dim);
    p.attribute_bias = Matrix(1, dv);
    if (s.fusion != FusionMode::kConcatenate) {
      p.linear_weight = Matrix(s.embedding_dim, kNumFields * dv);
      p.product_bias = Matrix(1, s.embedding_dim);
    }
    if (s.fusion == FusionMode::kProduct) p.quadratic_factor = Matrix(s.embedding_dim, kNumFields);
    p.difficulty_weight = Matrix(1, s.output_dim());
    p.difficulty_bias = Matrix(1, 1);
    return p;
  }

  void set_zero() {
    for (auto& [name, t] : tensors()) t->fill(0.0);
  }

  std::vector<std::pair<std::string_view, Matrix*>> tensors() {
    return {{"question_features", &question_features}, {"skill_features", &skill_features},
            {"attribute_weight", &attribute_weight},   {"attribute_bias", &attribute_bias},
            {"linear_weight", &linear_weight},         {"quadratic_factor", &quadratic_factor},
            {"product_bias", &product_bias},           {"difficulty_weight", &difficulty_weight},
            {"difficulty_bias", &difficulty_bias}};
  }
  std::vector<std::pair<std::string_view, const Matrix*>> tensors() const {
    auto list = const_cast<PebgParameters*>(this)->tensors();
    return {list.begin(), list.end()};
  }

  bool operator==(const PebgParameters& o) const {
    auto a = tensors();
    auto b = o.tensors();
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!(*a[i].second == *b[i].second)) return false;
    return true;
  }
};

/// Weights i.i.d. uniform on [-1/sqrt(d_v), 1/sqrt(d_v)]; the difficulty head
/// weight uses 1/sqrt(output_dim); all biases zero.
inline PebgParameters init_parameters(const PebgShapes& shapes, std::uint64_t seed) {
  if (shapes.vertex_dim == 0 || shapes.embedding_dim == 0) throw ConfigError("dimensions must be at least 1");
  PebgParameters p = PebgParameters::zeros(shapes);
  std::mt19937_64 rng(seed);
  auto fill_uniform = [&rng](Matrix& m, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : m.values()) v = dist(rng);
  };
  const double bound = 1.0 / std::sqrt(static_cast<double>(shapes.vertex_dim));
  fill_uniform(p.question_features, bound);
  fill_uniform(p.skill_features, bound);
  fill_uniform(p.attribute_weight, bound);
  fill_uniform(p.linear_weight, bound);
  fill_uniform(p.quadratic_factor, bound);
  fill_uniform(p.difficulty_weight, 1.0 / std::sqrt(static_cast<double>(shapes.output_dim())));
  return p;
}

// ---------------------------------------------------------------------------
// Product layer

struct ProductLayerActivation {
  std::size_t question = 0;
  std::vector<double> fields;         // z = [q; s'; a], 3 d_v
  std::array<double, 9> gram{};       // p_ij = <z_i, z_j>, row-major 3x3
  std::vector<double> linear_signal;  // l_z
  std::vector<double> quadratic_signal;  // l_p
  Matrix mixed;                       // row k: u_k = sum_i theta_ki z_i (d x d_v)
  std::vector<double> pre_activation;  // l_z + l_p + b
  std::vector<double> embedding;       // e, after ReLU and dropout
  std::vector<double> dropout_scale;   // empty when no dropout

  std::span<const double> field(std::size_t i, std::size_t dv) const { return {fields.data() + i * dv, dv}; }
};

/// Forward pass for one question. `dropout_scale`, when non-empty, multiplies
/// e elementwise (entries are 0 or 1/keep).
inline ProductLayerActivation forward_embedding(const PebgParameters& p, std::size_t q, const BipartiteGraph& graph,
                                                const AttributeFeatures& attributes,
                                                std::span<const double> dropout_scale = {}) {
  const auto& s = p.shapes;
  const std::size_t dv = s.vertex_dim;
  if (q >= s.num_questions) throw DataError("question index out of range");
  const auto& neighbors = graph.question_neighbors.at(q);
  if (neighbors.empty()) throw DataError("question " + std::to_string(q) + " has no skill neighbors");

  ProductLayerActivation act;
  act.question = q;
  act.fields.assign(kNumFields * dv, 0.0);
  std::span<double> zq(act.fields.data(), dv), zs(act.fields.data() + dv, dv), za(act.fields.data() + 2 * dv, dv);

  std::copy_n(p.question_features.row(q).begin(), dv, zq.begin());
  const double inv = 1.0 / static_cast<double>(neighbors.size());
  for (std::size_t j : neighbors) axpy(inv, p.skill_features.row(j), zs);
  matvec(p.attribute_weight, attributes.values.row(q), za);
  axpy(1.0, p.attribute_bias.row(0), za);

  for (std::size_t i = 0; i < kNumFields; ++i)
    for (std::size_t j = 0; j < kNumFields; ++j) act.gram[i * 3 + j] = dot(act.field(i, dv), act.field(j, dv));

  if (s.fusion == FusionMode::kConcatenate) {
    act.embedding = act.fields;
  } else {
    const std::size_t d = s.embedding_dim;
    act.linear_signal.assign(d, 0.0);
    act.quadratic_signal.assign(d, 0.0);
    matvec(p.linear_weight, act.fields, act.linear_signal);
    if (s.fusion == FusionMode::kProduct) {
      act.mixed = Matrix(d, dv);
      for (std::size_t k = 0; k < d; ++k) {
        auto u = act.mixed.row(k);
        for (std::size_t i = 0; i < kNumFields; ++i) axpy(p.quadratic_factor(k, i), act.field(i, dv), u);
        act.quadratic_signal[k] = dot(u, u);
      }
    }
    act.pre_activation.resize(d);
    act.embedding.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
      act.pre_activation[k] = act.linear_signal[k] + act.quadratic_signal[k] + p.product_bias(0, k);
      act.embedding[k] = act.pre_activation[k] > 0.0 ? act.pre_activation[k] : 0.0;
    }
  }

  if (!dropout_scale.empty()) {
    if (dropout_scale.size() != act.embedding.size()) throw DataError("dropout mask width mismatch");
    act.dropout_scale.assign(dropout_scale.begin(), dropout_scale.end());
    for (std::size_t k = 0; k < act.embedding.size(); ++k) act.embedding[k] *= act.dropout_scale[k];
  }
  return act;
}

/// Accumulates into `grads` the gradient of a scalar whose derivative with
/// respect to e is `grad_embedding`.
inline void backward_embedding(const PebgParameters& p, const ProductLayerActivation& act, const BipartiteGraph& graph,
                               const AttributeFeatures& attributes, std::span<const double> grad_embedding,
                               PebgParameters& grads) {
  const auto& s = p.shapes;
  const std::size_t dv = s.vertex_dim;
  std::vector<double> g_e(grad_embedding.begin(), grad_embedding.end());
  if (!act.dropout_scale.empty())
    for (std::size_t k = 0; k < g_e.size(); ++k) g_e[k] *= act.dropout_scale[k];

  std::vector<double> g_z;
  if (s.fusion == FusionMode::kConcatenate) {
    g_z = std::move(g_e);
  } else {
    const std::size_t d = s.embedding_dim;
    std::vector<double> g_pre(d);
    for (std::size_t k = 0; k < d; ++k) g_pre[k] = act.pre_activation[k] > 0.0 ? g_e[k] : 0.0;
    g_z.assign(kNumFields * dv, 0.0);
    axpy(1.0, g_pre, grads.product_bias.row(0));
    outer_add(g_pre, act.fields, grads.linear_weight);
    matvec_transpose_add(p.linear_weight, g_pre, g_z);
    if (s.fusion == FusionMode::kProduct) {
      for (std::size_t k = 0; k < d; ++k) {
        if (g_pre[k] == 0.0) continue;
        auto u = act.mixed.row(k);
        // d l_p[k] / d u_k = 2 u_k
        for (std::size_t i = 0; i < kNumFields; ++i) {
          grads.quadratic_factor(k, i) += 2.0 * g_pre[k] * dot(u, act.field(i, dv));
          axpy(2.0 * g_pre[k] * p.quadratic_factor(k, i), u, std::span<double>(g_z.data() + i * dv, dv));
        }
      }
    }
  }

  const std::size_t q = act.question;
  std::span<const double> g_q(g_z.data(), dv), g_s(g_z.data() + dv, dv), g_a(g_z.data() + 2 * dv, dv);
  axpy(1.0, g_q, grads.question_features.row(q));
  const auto& neighbors = graph.question_neighbors[q];
  const double inv = 1.0 / static_cast<double>(neighbors.size());
  for (std::size_t j : neighbors) axpy(inv, g_s, grads.skill_features.row(j));
  outer_add(g_a, attributes.values.row(q), grads.attribute_weight);
  axpy(1.0, g_a, grads.attribute_bias.row(0));
}

// ---------------------------------------------------------------------------
// Losses. Each accumulate_* returns the summed loss over its batch and adds
// `scale` times the gradient into `grads` when `grads` is non-null.

/// Cross-entropy between sigma(q_i . s_j) and the pair label.
inline double accumulate_explicit_loss(const PebgParameters& p, std::span<const LabeledPair> pairs, double scale,
                                       PebgParameters* grads) {
  double loss = 0.0;
  for (const auto& pr : pairs) {
    if (pr.first >= p.shapes.num_questions || pr.second >= p.shapes.num_skills)
      throw DataError("explicit pair index out of range");
    auto qi = p.question_features.row(pr.first);
    auto sj = p.skill_features.row(pr.second);
    const double x = dot(qi, sj);
    loss += bce_with_logit(x, pr.label);
    if (grads) {
      const double g = scale * (sigmoid(x) - pr.label);
      axpy(g, sj, grads->question_features.row(pr.first));
      axpy(g, qi, grads->skill_features.row(pr.second));
    }
  }
  return loss;
}

/// Cross-entropy between sigma(v_i . v_j) and the label, where v is the
/// question or skill feature matrix depending on `side`. Pairs with i == j
/// contribute 2 v_i to the gradient.
inline double accumulate_similarity_loss(const PebgParameters& p, Side side, std::span<const LabeledPair> pairs,
                                         double scale, PebgParameters* grads) {
  const Matrix& v = side == Side::kQuestion ? p.question_features : p.skill_features;
  Matrix* gv = grads ? (side == Side::kQuestion ? &grads->question_features : &grads->skill_features) : nullptr;
  double loss = 0.0;
  for (const auto& pr : pairs) {
    if (pr.first >= v.rows() || pr.second >= v.rows()) throw DataError("similarity pair index out of range");
    auto vi = v.row(pr.first);
    auto vj = v.row(pr.second);
    const double x = dot(vi, vj);
    loss += bce_with_logit(x, pr.label);
    if (gv) {
      const double g = scale * (sigmoid(x) - pr.label);
      axpy(g, vj, gv->row(pr.first));
      axpy(g, vi, gv->row(pr.second));
    }
  }
  return loss;
}

/// Squared error between the difficulty head and the observed correct ratio.
/// `dropout` is either empty or questions.size() x output_dim scale factors.
inline double accumulate_difficulty_loss(const PebgParameters& p, std::span<const std::size_t> questions,
                                         const BipartiteGraph& graph, const AttributeFeatures& attributes,
                                         const DifficultyVector& difficulty, const Matrix& dropout, double scale,
                                         PebgParameters* grads) {
  double loss = 0.0;
  std::vector<double> g_e(p.shapes.output_dim());
  for (std::size_t b = 0; b < questions.size(); ++b) {
    const std::size_t q = questions[b];
    if (q >= difficulty.size() || !difficulty.observed[q])
      throw DataError("question " + std::to_string(q) + " has no observed difficulty");
    auto act = forward_embedding(p, q, graph, attributes,
                                 dropout.empty() ? std::span<const double>{} : dropout.row(b));
    const double predicted = dot(p.difficulty_weight.row(0), act.embedding) + p.difficulty_bias(0, 0);
    const double residual = predicted - difficulty.values[q];
    loss += residual * residual;
    if (grads) {
      const double g = scale * 2.0 * residual;
      grads->difficulty_bias(0, 0) += g;
      axpy(g, act.embedding, grads->difficulty_weight.row(0));
      for (std::size_t k = 0; k < g_e.size(); ++k) g_e[k] = g * p.difficulty_weight(0, k);
      backward_embedding(p, act, graph, attributes, g_e, *grads);
    }
  }
  return loss;
}

struct LossResult {
  double loss = 0.0;
  PebgParameters gradients;
};

inline LossResult explicit_relation_loss(const PebgParameters& p, std::span<const LabeledPair> pairs) {
  LossResult r{0.0, PebgParameters::zeros(p.shapes)};
  r.loss = accumulate_explicit_loss(p, pairs, 1.0, &r.gradients);
  return r;
}

inline LossResult implicit_similarity_loss(const PebgParameters& p, Side side, std::span<const LabeledPair> pairs) {
  LossResult r{0.0, PebgParameters::zeros(p.shapes)};
  r.loss = accumulate_similarity_loss(p, side, pairs, 1.0, &r.gradients);
  return r;
}

inline LossResult difficulty_loss(const PebgParameters& p, std::span<const std::size_t> questions,
                                  const BipartiteGraph& graph, const AttributeFeatures& attributes,
                                  const DifficultyVector& difficulty) {
  LossResult r{0.0, PebgParameters::zeros(p.shapes)};
  r.loss = accumulate_difficulty_loss(p, questions, graph, attributes, difficulty, Matrix{}, 1.0, &r.gradients);
  return r;
}

}  // namespace pebg
