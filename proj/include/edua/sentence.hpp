#pragma once

#include <array>
#include <memory>
#include <random>
#include <vector>

#include "edua/autodiff.hpp"
#include "edua/data.hpp"
#include "edua/encoder.hpp"
#include "edua/model.hpp"

namespace edua {

// ---------------------------------------------------------------------------
// Single-item surfaces

// EDU-level sparse attention over one aspect's EDU representations.
inline AttentionVector edu_attention(const ModelParams& mp, const std::vector<Tensor>& edu_reps) {
  if (edu_reps.empty()) throw DimensionError("attention over zero EDUs");
  std::vector<double> scores(edu_reps.size());
  for (std::size_t j = 0; j < edu_reps.size(); ++j) {
    double s = 0.0;
    for (int c = 0; c < edu_reps[j].numel(); ++c) s += edu_reps[j][c] * mp.edu_attn->value.at(c, 0);
    scores[j] = s;
  }
  return sparsemax(scores);
}

inline Tensor sentence_representation(const std::vector<Tensor>& edu_reps, const AttentionVector& beta) {
  if (beta.size() != static_cast<int>(edu_reps.size())) throw DimensionError("attention length mismatch");
  Tensor out(edu_reps[0].shape);
  for (std::size_t j = 0; j < edu_reps.size(); ++j) {
    const double w = beta.scores[j];
    if (w == 0.0) continue;
    for (int c = 0; c < out.numel(); ++c) out[c] += w * edu_reps[j][c];
  }
  return out;
}

// Deviation of the EDU-by-aspect attention matrix from columnwise
// orthonormality: ||M^T M - I|| under the configured norm.
inline double orth_regularization(const Tensor& m, OrthNorm norm = OrthNorm::frobenius) {
  const int J = m.rows(), K = m.cols();
  double s = 0.0;
  for (int i = 0; i < K; ++i)
    for (int k = 0; k < K; ++k) {
      double g = 0.0;
      for (int j = 0; j < J; ++j) g += m.at(j, i) * m.at(j, k);
      const double d = g - (i == k ? 1.0 : 0.0);
      s += d * d;
    }
  return norm == OrthNorm::frobenius ? std::sqrt(s) : s;
}

inline std::array<double, 3> predict_sentiment(const ModelParams& mp, const Tensor& sentence_rep) {
  std::vector<double> logits(3, 0.0);
  for (int c = 0; c < 3; ++c) {
    logits[static_cast<std::size_t>(c)] = mp.sentiment_b->value[c];
    for (int i = 0; i < sentence_rep.numel(); ++i)
      logits[static_cast<std::size_t>(c)] += sentence_rep[i] * mp.sentiment_w->value.at(i, c);
  }
  std::vector<double> p = softmax(logits);
  return {p[0], p[1], p[2]};
}

inline double predict_aspect_presence(const ModelParams& mp, const Tensor& sentence_rep) {
  double logit = mp.presence_b->value[0];
  for (int i = 0; i < sentence_rep.numel(); ++i) logit += sentence_rep[i] * mp.presence_w->value.at(i, 0);
  return logit >= 0.0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
}

// ---------------------------------------------------------------------------
// Full forward pass

struct LossWeights {
  double sentiment = 1.0;  // lambda_1
  double presence = 1.0;   // lambda_2
  double orthogonal = 0.1; // lambda_3
};

struct LossBreakdown {
  double sentiment_ce = 0.0;
  double presence_bce = 0.0;
  double orthogonal = 0.0;
  double total = 0.0;
  LossWeights lambdas;
};

struct ForwardOptions {
  bool training = false;
  double dropout = 0.0;
  LossWeights lambdas;
  bool with_loss = true;
};

// Everything the callers need from one batch pass. Keeps the graph alive so
// attention/probability vars stay valid, and so backward() can run.
struct ForwardResult {
  std::unique_ptr<Graph> graph;
  BatchPlan plan;
  LossWeights lambdas;

  Var alpha;             // [R x Tmax] word attention, rows are (EDU, aspect)
  Var beta;              // [R x 1] EDU attention
  Var sentiment_logits;  // [B*K x 3]
  Var sentiment_probs;   // [B*K x 3]
  Var presence_logits;   // [B*K x 1]

  Var loss_total, loss_sentiment, loss_presence, loss_orth;  // valid when with_loss

  LossBreakdown breakdown() const {
    LossBreakdown b;
    b.sentiment_ce = loss_sentiment.val()[0];
    b.presence_bce = loss_presence.val()[0];
    b.orthogonal = loss_orth.val()[0];
    b.total = loss_total.val()[0];
    b.lambdas = lambdas;
    return b;
  }

  std::vector<double> word_attention_for(int edu, int aspect) const {
    const int r = plan.row_of(edu, aspect);
    const int len = static_cast<int>(plan.edus[static_cast<std::size_t>(edu)].token_ids.size());
    std::vector<double> out(static_cast<std::size_t>(len));
    for (int t = 0; t < len; ++t) out[static_cast<std::size_t>(t)] = alpha.val().at(r, t);
    return out;
  }

  std::vector<double> edu_attention_for(int sentence, int aspect) const {
    std::vector<double> out;
    for (int e : plan.sentence_edus[static_cast<std::size_t>(sentence)])
      out.push_back(beta.val()[plan.row_of(e, aspect)]);
    return out;
  }

  // The J x K attention matrix of one sentence.
  Tensor attention_matrix(int sentence) const {
    const auto& edus = plan.sentence_edus[static_cast<std::size_t>(sentence)];
    Tensor m({static_cast<int>(edus.size()), plan.n_aspects});
    for (std::size_t j = 0; j < edus.size(); ++j)
      for (int k = 0; k < plan.n_aspects; ++k) m.at(static_cast<int>(j), k) = beta.val()[plan.row_of(edus[j], k)];
    return m;
  }

  std::array<double, 3> sentiment_for(int sentence, int aspect) const {
    const int gi = plan.group_of(sentence, aspect);
    return {sentiment_probs.val().at(gi, 0), sentiment_probs.val().at(gi, 1), sentiment_probs.val().at(gi, 2)};
  }

  double presence_for(int sentence, int aspect) const {
    const double x = presence_logits.val()[plan.group_of(sentence, aspect)];
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
};

inline ForwardResult forward_batch(const ModelParams& mp, const BatchPlan& plan, const ForwardOptions& opt,
                                   std::mt19937_64& rng) {
  ForwardResult res;
  res.graph = std::make_unique<Graph>();
  res.plan = plan;
  res.lambdas = opt.lambdas;
  Graph& g = *res.graph;

  const int K = plan.n_aspects;
  const int T = plan.max_len;

  // Word-aspect fusion per step, with dropout on the fused features.
  Var asp_proj = aspect_projection(g, mp);
  std::vector<Var> fused(static_cast<std::size_t>(T));
  std::vector<std::vector<double>> masks(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    Var words = gather_param_rows(g, *mp.word_emb, plan.step_token_ids(t));
    Var f = fuse_rows(g, mp, words, asp_proj);
    fused[static_cast<std::size_t>(t)] = dropout(f, opt.dropout, opt.training, rng);
    masks[static_cast<std::size_t>(t)] = plan.step_mask(t);
  }

  // Context encoding and word-level sparse attention.
  std::vector<Var> states = bigru_rows(g, mp, fused, masks);
  res.alpha = word_attention_rows(g, mp, states, plan.row_lengths());

  // EDU representations with position embeddings.
  std::vector<int> pos_per_row(static_cast<std::size_t>(plan.n_rows()));
  for (int e = 0; e < plan.n_edus(); ++e)
    for (int k = 0; k < K; ++k)
      pos_per_row[static_cast<std::size_t>(plan.row_of(e, k))] = plan.edus[static_cast<std::size_t>(e)].edu_index;
  Var edu_reps = edu_representation_rows(g, mp, states, res.alpha, pos_per_row);

  // EDU-level sparse attention, grouped per (sentence, aspect).
  std::vector<std::vector<int>> groups;
  groups.reserve(static_cast<std::size_t>(plan.n_sentences * K));
  for (int s = 0; s < plan.n_sentences; ++s)
    for (int k = 0; k < K; ++k) {
      std::vector<int> rows;
      for (int e : plan.sentence_edus[static_cast<std::size_t>(s)]) rows.push_back(plan.row_of(e, k));
      groups.push_back(std::move(rows));
    }
  Var edu_scores = matmul(edu_reps, leaf(g, *mp.edu_attn));
  res.beta = sparsemax_groups(edu_scores, groups);

  // Sentence representations and the two heads.
  Var sent_reps = group_mix(edu_reps, res.beta, groups);
  sent_reps = dropout(sent_reps, opt.dropout, opt.training, rng);
  res.sentiment_logits = add_rowvec(matmul(sent_reps, leaf(g, *mp.sentiment_w)), leaf(g, *mp.sentiment_b));
  res.sentiment_probs = softmax_rows(res.sentiment_logits);
  res.presence_logits = add_rowvec(matmul(sent_reps, leaf(g, *mp.presence_w)), leaf(g, *mp.presence_b));

  if (!opt.with_loss) return res;

  // Sentiment cross-entropy over gold (sentence, aspect) pairs only.
  if (plan.gold_pairs.empty()) throw DataError("batch has no gold (sentence, aspect) pairs");
  std::vector<int> gold_rows;
  gold_rows.reserve(plan.gold_pairs.size());
  for (const auto& [s, k] : plan.gold_pairs) gold_rows.push_back(plan.group_of(s, k));
  res.loss_sentiment = cross_entropy_mean(select_rows(res.sentiment_logits, gold_rows), plan.gold_polarity);

  // Aspect-presence BCE over every aspect of every sentence.
  res.loss_presence = binary_cross_entropy_mean(res.presence_logits, plan.presence_targets);

  // Orthogonality penalty, averaged over sentences.
  Var orth_sum = constant(g, Tensor::scalar(0.0));
  for (int s = 0; s < plan.n_sentences; ++s) {
    const auto& edus = plan.sentence_edus[static_cast<std::size_t>(s)];
    const int J = static_cast<int>(edus.size());
    std::vector<int> row_of(static_cast<std::size_t>(J * K));
    for (int j = 0; j < J; ++j)
      for (int k = 0; k < K; ++k)
        row_of[static_cast<std::size_t>(j * K + k)] = plan.row_of(edus[static_cast<std::size_t>(j)], k);
    Var m = scatter_to_matrix(res.beta, J, K, std::move(row_of));
    Var gram = matmul(transpose(m), m);
    Tensor neg_eye = Tensor::identity(K);
    for (double& x : neg_eye.v) x = -x;
    Var dev = add(gram, constant(g, std::move(neg_eye)));
    Var r = mp.dims.orth_norm == OrthNorm::frobenius ? frobenius_norm(dev) : sum_squares(dev);
    orth_sum = add(orth_sum, r);
  }
  res.loss_orth = scale(orth_sum, 1.0 / plan.n_sentences);

  res.loss_total = add(add(scale(res.loss_sentiment, opt.lambdas.sentiment),
                           scale(res.loss_presence, opt.lambdas.presence)),
                       scale(res.loss_orth, opt.lambdas.orthogonal));
  return res;
}

// Combined loss over a batch from precomputed predictions is what the graph
// produces; this helper recomputes the weighted sum for bookkeeping and
// invariant checks.
inline double combined_loss(const LossBreakdown& b) {
  return (b.lambdas.sentiment * b.sentiment_ce + b.lambdas.presence * b.presence_bce) +
         b.lambdas.orthogonal * b.orthogonal;
}

}  // namespace edua
