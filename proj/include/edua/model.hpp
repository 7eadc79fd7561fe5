#pragma once

#include <memory>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "edua/autodiff.hpp"
#include "edua/data.hpp"
#include "edua/errors.hpp"
#include "edua/tensor.hpp"

namespace edua {

enum class OrthNorm { frobenius, frobenius_squared };

inline OrthNorm orth_norm_from(const std::string& s) {
  if (s == "frobenius") return OrthNorm::frobenius;
  if (s == "frobenius_squared") return OrthNorm::frobenius_squared;
  throw ConfigError("unknown orthogonality norm '" + s + "'");
}

struct ModelDims {
  int word_dim = 300;
  int aspect_dim = 300;
  int fused_dim = 300;
  int hidden_dim = 150;  // per direction
  int max_edus = 16;     // position table size
  int n_aspects = 0;
  int vocab_size = 0;
  OrthNorm orth_norm = OrthNorm::frobenius;

  int state_dim() const { return 2 * hidden_dim; }
};

// One GRU direction: update/reset gates and the candidate state, each with
// an input projection, a recurrent projection, and a bias.
struct GruCell {
  Parameter* w_update = nullptr;
  Parameter* w_reset = nullptr;
  Parameter* w_cand = nullptr;
  Parameter* u_update = nullptr;
  Parameter* u_reset = nullptr;
  Parameter* u_cand = nullptr;
  Parameter* b_update = nullptr;
  Parameter* b_reset = nullptr;
  Parameter* b_cand = nullptr;
};

// Every learnable tensor of the model. Creation order is fixed so that
// seeded initialization is reproducible.
class ModelParams {
 public:
  ModelDims dims;

  Parameter* word_emb = nullptr;     // V x d_w, embedding learning-rate group
  Parameter* aspect_emb = nullptr;   // K x d_a
  Parameter* fuse_word = nullptr;    // d_w x d_f
  Parameter* fuse_aspect = nullptr;  // d_a x d_f
  GruCell fwd, bwd;
  Parameter* word_attn = nullptr;    // 2d_h x 1, no bias
  Parameter* pos_table = nullptr;    // max_edus x 2d_h
  Parameter* edu_attn = nullptr;     // 2d_h x 1, no bias
  Parameter* sentiment_w = nullptr;  // 2d_h x 3
  Parameter* sentiment_b = nullptr;  // 3
  Parameter* presence_w = nullptr;   // 2d_h x 1
  Parameter* presence_b = nullptr;   // 1

  ModelParams() = default;
  ModelParams(const ModelParams&) = delete;
  ModelParams& operator=(const ModelParams&) = delete;
  ModelParams(ModelParams&&) = default;
  ModelParams& operator=(ModelParams&&) = default;

  // Weights are uniform(-0.1, 0.1); biases and the position table start at
  // zero. Word embeddings come from the vocabulary's initial matrix. Aspect
  // embeddings copy the embedding row of their configured init word when it
  // is in-vocabulary, otherwise stay random.
  static ModelParams init(const ModelDims& dims_in, const Vocab& vocab, const AspectSet& aspects,
                          std::mt19937_64& rng) {
    ModelParams mp;
    mp.dims = dims_in;
    mp.dims.vocab_size = vocab.size();
    mp.dims.n_aspects = aspects.size();
    if (vocab.embeddings.cols() != mp.dims.word_dim)
      throw ConfigError("embedding width " + std::to_string(vocab.embeddings.cols()) + " does not match word_dim " +
                        std::to_string(mp.dims.word_dim));

    const int dw = mp.dims.word_dim, da = mp.dims.aspect_dim, df = mp.dims.fused_dim;
    const int dh = mp.dims.hidden_dim, ds = mp.dims.state_dim();
    const int K = mp.dims.n_aspects;

    mp.word_emb = mp.add("word_embeddings", vocab.embeddings, Parameter::Group::embedding);

    Tensor aemb = Tensor::uniform({K, da}, -0.1, 0.1, rng);
    for (int k = 0; k < K; ++k) {
      auto it = aspects.init_word.find(aspects.names[static_cast<std::size_t>(k)]);
      if (it == aspects.init_word.end() || it->second.empty()) continue;
      auto vit = vocab.ids.find(it->second);
      if (vit == vocab.ids.end()) continue;
      if (da != dw) throw ConfigError("aspect_dim must equal word_dim to seed aspects from word vectors");
      for (int c = 0; c < da; ++c) aemb.at(k, c) = vocab.embeddings.at(vit->second, c);
    }
    mp.aspect_emb = mp.add("aspect_embeddings", std::move(aemb));

    mp.fuse_word = mp.add_uniform("fuse.word", {dw, df}, rng);
    mp.fuse_aspect = mp.add_uniform("fuse.aspect", {da, df}, rng);
    mp.fwd = mp.add_gru("gru.fwd", df, dh, rng);
    mp.bwd = mp.add_gru("gru.bwd", df, dh, rng);
    mp.word_attn = mp.add_uniform("word_attention.w", {ds, 1}, rng);
    mp.pos_table = mp.add("position_table", Tensor::zeros({mp.dims.max_edus, ds}));
    mp.edu_attn = mp.add_uniform("edu_attention.w", {ds, 1}, rng);
    mp.sentiment_w = mp.add_uniform("sentiment_head.w", {ds, 3}, rng);
    mp.sentiment_b = mp.add("sentiment_head.b", Tensor::zeros({3}));
    mp.presence_w = mp.add_uniform("presence_head.w", {ds, 1}, rng);
    mp.presence_b = mp.add("presence_head.b", Tensor::zeros({1}));
    return mp;
  }

  const std::vector<std::unique_ptr<Parameter>>& all() const { return store_; }

  std::vector<Parameter*> parameters() const {
    std::vector<Parameter*> out;
    out.reserve(store_.size());
    for (const auto& p : store_) out.push_back(p.get());
    return out;
  }

  Parameter* find(const std::string& name) const {
    for (const auto& p : store_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  void zero_grad() {
    for (const auto& p : store_) p->zero_grad();
  }

  // The padding embedding row stays all-zero: clear any gradient it picked up
  // before the optimizer runs.
  void freeze_padding_row() {
    for (int c = 0; c < word_emb->grad.cols(); ++c) word_emb->grad.at(Vocab::pad_id, c) = 0.0;
  }

  std::vector<Tensor> snapshot() const {
    std::vector<Tensor> out;
    out.reserve(store_.size());
    for (const auto& p : store_) out.push_back(p->value);
    return out;
  }

  void restore(const std::vector<Tensor>& snap) {
    if (snap.size() != store_.size()) throw CompatError("snapshot parameter count mismatch");
    for (std::size_t i = 0; i < snap.size(); ++i) {
      if (snap[i].shape != store_[i]->value.shape) throw CompatError("snapshot shape mismatch for " + store_[i]->name);
      store_[i]->value = snap[i];
    }
  }

 private:
  std::vector<std::unique_ptr<Parameter>> store_;
  std::unordered_set<std::string> names_;

  Parameter* add(const std::string& name, Tensor t, Parameter::Group g = Parameter::Group::model) {
    if (!names_.insert(name).second) throw ConfigError("duplicate parameter name " + name);
    store_.push_back(std::make_unique<Parameter>(name, std::move(t), g));
    return store_.back().get();
  }

  Parameter* add_uniform(const std::string& name, std::vector<int> shape, std::mt19937_64& rng) {
    return add(name, Tensor::uniform(std::move(shape), -0.1, 0.1, rng));
  }

  GruCell add_gru(const std::string& prefix, int in_dim, int hid_dim, std::mt19937_64& rng) {
    GruCell c;
    c.w_update = add_uniform(prefix + ".w_update", {in_dim, hid_dim}, rng);
    c.w_reset = add_uniform(prefix + ".w_reset", {in_dim, hid_dim}, rng);
    c.w_cand = add_uniform(prefix + ".w_cand", {in_dim, hid_dim}, rng);
    c.u_update = add_uniform(prefix + ".u_update", {hid_dim, hid_dim}, rng);
    c.u_reset = add_uniform(prefix + ".u_reset", {hid_dim, hid_dim}, rng);
    c.u_cand = add_uniform(prefix + ".u_cand", {hid_dim, hid_dim}, rng);
    c.b_update = add(prefix + ".b_update", Tensor::zeros({hid_dim}));
    c.b_reset = add(prefix + ".b_reset", Tensor::zeros({hid_dim}));
    c.b_cand = add(prefix + ".b_cand", Tensor::zeros({hid_dim}));
    return c;
  }
};

}  // namespace edua
