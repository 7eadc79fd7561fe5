#pragma once

#include <random>
#include <vector>

#include "edua/autodiff.hpp"
#include "edua/model.hpp"
#include "edua/sparsemax.hpp"

namespace edua {

// ---------------------------------------------------------------------------
// Graph-building blocks. These operate on R rows at once, where a row is one
// (EDU, aspect) pair; single-item convenience wrappers for each block follow
// below.

// tanh(word * W_word + aspect * W_aspect) for every (word-row, aspect-row)
// pair: words [E x d_w] and aspects [K x d_a] fuse into [(E*K) x d_f].
inline Var fuse_rows(Graph& g, const ModelParams& mp, Var words, Var aspect_proj) {
  Var xw = matmul(words, leaf(g, *mp.fuse_word));
  return tanh_op(pairwise_row_add(xw, aspect_proj));
}

inline Var aspect_projection(Graph& g, const ModelParams& mp) {
  return matmul(leaf(g, *mp.aspect_emb), leaf(g, *mp.fuse_aspect));
}

namespace detail {

inline Var gru_step(Graph& g, const GruCell& c, Var x, Var h) {
  Var z = sigmoid_op(add_rowvec(add(matmul(x, leaf(g, *c.w_update)), matmul(h, leaf(g, *c.u_update))),
                                leaf(g, *c.b_update)));
  Var r = sigmoid_op(add_rowvec(add(matmul(x, leaf(g, *c.w_reset)), matmul(h, leaf(g, *c.u_reset))),
                                leaf(g, *c.b_reset)));
  Var cand = tanh_op(add_rowvec(add(matmul(x, leaf(g, *c.w_cand)), matmul(mul(r, h), leaf(g, *c.u_cand))),
                                leaf(g, *c.b_cand)));
  // h' = (1 - z) * h + z * cand
  return add(mul(affine(z, -1.0, 1.0), h), mul(z, cand));
}

// One direction over the padded step sequence. Rows whose mask is 0 at a
// step carry their previous state, so padding never leaks into valid
// positions (in particular not into the reverse direction's prefix).
inline std::vector<Var> gru_direction(Graph& g, const GruCell& cell, const std::vector<Var>& inputs,
                                      const std::vector<std::vector<double>>& masks, bool reverse,
                                      int hidden_dim) {
  const int T = static_cast<int>(inputs.size());
  const int R = inputs[0].val().rows();
  std::vector<Var> out(static_cast<std::size_t>(T));
  Var h = constant(g, Tensor::zeros({R, hidden_dim}));
  for (int step = 0; step < T; ++step) {
    const int t = reverse ? T - 1 - step : step;
    Var hnew = gru_step(g, cell, inputs[static_cast<std::size_t>(t)], h);
    const std::vector<double>& m = masks[static_cast<std::size_t>(t)];
    std::vector<double> inv(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) inv[i] = 1.0 - m[i];
    h = add(rowscale_const(hnew, m), rowscale_const(h, inv));
    out[static_cast<std::size_t>(t)] = h;
  }
  return out;
}

}  // namespace detail

// Bidirectional GRU over T padded steps of [R x d_f] rows; per-step output is
// [forward ; backward] of width 2*hidden_dim.
inline std::vector<Var> bigru_rows(Graph& g, const ModelParams& mp, const std::vector<Var>& inputs,
                                   const std::vector<std::vector<double>>& masks) {
  if (inputs.empty()) throw DimensionError("empty sequence");
  std::vector<Var> f = detail::gru_direction(g, mp.fwd, inputs, masks, false, mp.dims.hidden_dim);
  std::vector<Var> b = detail::gru_direction(g, mp.bwd, inputs, masks, true, mp.dims.hidden_dim);
  std::vector<Var> out(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) out[t] = concat_cols(f[t], b[t]);
  return out;
}

// Word-level sparse attention: per-step scores H_t * w stacked into [R x T],
// then sparsemax over each row's valid prefix.
inline Var word_attention_rows(Graph& g, const ModelParams& mp, const std::vector<Var>& states,
                               const std::vector<int>& row_lengths) {
  std::vector<Var> score_cols;
  score_cols.reserve(states.size());
  Var w = leaf(g, *mp.word_attn);
  for (const Var& h : states) score_cols.push_back(matmul(h, w));
  return sparsemax_rows(stack_cols(score_cols), row_lengths);
}

// Attention-weighted sum of hidden states plus the EDU's position embedding.
inline Var edu_representation_rows(Graph& g, const ModelParams& mp, const std::vector<Var>& states, Var alpha,
                                   const std::vector<int>& edu_position_per_row) {
  Var mixed = attention_mix(states, alpha);
  Var pos = gather_param_rows(g, *mp.pos_table, edu_position_per_row);
  return add(mixed, pos);
}

// ---------------------------------------------------------------------------
// Single-item surfaces (forward values only). These run the same graph ops
// with one row and return plain tensors.

inline Tensor fuse_word_aspect(const ModelParams& mp, const Tensor& word_vec, const Tensor& aspect_vec) {
  if (word_vec.numel() != mp.dims.word_dim || aspect_vec.numel() != mp.dims.aspect_dim)
    throw DimensionError("fusion input sizes " + word_vec.shape_str() + ", " + aspect_vec.shape_str());
  Graph g;
  Var w = constant(g, Tensor({1, mp.dims.word_dim}, word_vec.v));
  Var a = constant(g, Tensor({1, mp.dims.aspect_dim}, aspect_vec.v));
  Var fused = tanh_op(pairwise_row_add(matmul(w, leaf(g, *mp.fuse_word)), matmul(a, leaf(g, *mp.fuse_aspect))));
  return Tensor({mp.dims.fused_dim}, fused.val().v);
}

// Encodes one fused-word sequence; returns the stacked per-step states
// [T x 2*hidden_dim].
inline Tensor bigru_encode(const ModelParams& mp, const std::vector<Tensor>& fused) {
  if (fused.empty()) throw DimensionError("empty sequence");
  Graph g;
  std::vector<Var> inputs;
  std::vector<std::vector<double>> masks;
  for (const Tensor& f : fused) {
    inputs.push_back(constant(g, Tensor({1, mp.dims.fused_dim}, f.v)));
    masks.push_back({1.0});
  }
  std::vector<Var> states = bigru_rows(g, mp, inputs, masks);
  Tensor out({static_cast<int>(fused.size()), mp.dims.state_dim()});
  for (std::size_t t = 0; t < states.size(); ++t)
    for (int c = 0; c < mp.dims.state_dim(); ++c) out.at(static_cast<int>(t), c) = states[t].val().at(0, c);
  return out;
}

// Sparse attention over the valid rows of H [T x 2d_h]; masked positions get
// exact zeros. An empty mask means all positions are valid.
inline AttentionVector word_attention(const ModelParams& mp, const Tensor& states,
                                      const std::vector<bool>& mask = {}) {
  const int T = states.rows();
  if (T < 1) throw DimensionError("attention over empty state matrix");
  if (!mask.empty() && static_cast<int>(mask.size()) != T) throw DimensionError("mask length mismatch");
  std::vector<double> scores;
  std::vector<int> valid;
  for (int t = 0; t < T; ++t) {
    if (!mask.empty() && !mask[static_cast<std::size_t>(t)]) continue;
    double s = 0.0;
    for (int c = 0; c < states.cols(); ++c) s += states.at(t, c) * mp.word_attn->value.at(c, 0);
    scores.push_back(s);
    valid.push_back(t);
  }
  if (valid.empty()) throw InputError("all positions are masked");
  AttentionVector inner = sparsemax(scores);
  AttentionVector out;
  out.scores.assign(static_cast<std::size_t>(T), 0.0);
  for (std::size_t i = 0; i < valid.size(); ++i) out.scores[static_cast<std::size_t>(valid[i])] = inner.scores[i];
  for (int t = 0; t < T; ++t)
    if (out.scores[static_cast<std::size_t>(t)] > 0.0) out.support.push_back(t);
  return out;
}

inline Tensor edu_representation(const ModelParams& mp, const Tensor& states, const AttentionVector& alpha,
                                 int edu_index) {
  if (edu_index >= mp.dims.max_edus)
    throw ConfigError("EDU index " + std::to_string(edu_index) + " exceeds position table size " +
                      std::to_string(mp.dims.max_edus));
  if (alpha.size() != states.rows()) throw DimensionError("attention length mismatch");
  Tensor out({mp.dims.state_dim()});
  for (int c = 0; c < out.numel(); ++c) out[c] = mp.pos_table->value.at(edu_index, c);
  for (int t = 0; t < states.rows(); ++t) {
    const double w = alpha.scores[static_cast<std::size_t>(t)];
    if (w == 0.0) continue;
    for (int c = 0; c < out.numel(); ++c) out[c] += w * states.at(t, c);
  }
  return out;
}

}  // namespace edua
