#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "edua/data.hpp"
#include "edua/errors.hpp"
#include "edua/metrics.hpp"
#include "edua/model.hpp"
#include "edua/sentence.hpp"

namespace edua {

struct TrainConfig {
  double lr_model = 1e-3;
  double lr_embedding = 1e-4;
  int batch_size = 32;
  int eval_every = 16;  // mini-batches between validation passes
  double dropout = 0.5;
  LossWeights lambdas;
  int patience = 10;  // evaluations without val-accuracy improvement
  int max_epochs = 100;
  std::uint64_t seed = 1;
  double clip_norm = 5.0;

  void validate() const {
    if (lr_model <= 0.0 || lr_embedding <= 0.0) throw ConfigError("learning rates must be positive");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
    if (lambdas.sentiment < 0 || lambdas.presence < 0 || lambdas.orthogonal < 0)
      throw ConfigError("loss weights must be nonnegative");
  }
};

// A trained or trainable model: parameters plus the vocabulary and aspect
// inventory they are bound to.
struct Model {
  ModelParams params;
  Vocab vocab;
  AspectSet aspects;

  static Model init(const ModelDims& dims, Vocab vocab, AspectSet aspects, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Model m;
    m.params = ModelParams::init(dims, vocab, aspects, rng);
    m.vocab = std::move(vocab);
    m.aspects = std::move(aspects);
    return m;
  }
};

// ---------------------------------------------------------------------------
// Adam with two learning-rate groups (model weights vs word embeddings),
// bias correction, and per-element moment estimates.
class Adam {
 public:
  Adam(double lr_model, double lr_embedding, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_model_(lr_model), lr_embedding_(lr_embedding), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Parameter*>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (Parameter* p : params) {
      Moments& m = moments_[p];
      if (m.first.numel() == 0) {
        m.first = Tensor::zeros(p->value.shape);
        m.second = Tensor::zeros(p->value.shape);
      }
      const double lr = p->group == Parameter::Group::embedding ? lr_embedding_ : lr_model_;
      for (int i = 0; i < p->value.numel(); ++i) {
        const double grad = p->grad[i];
        if (!std::isfinite(grad)) throw NumericError("non-finite gradient in parameter " + p->name);
        m.first[i] = beta1_ * m.first[i] + (1.0 - beta1_) * grad;
        m.second[i] = beta2_ * m.second[i] + (1.0 - beta2_) * grad * grad;
        const double mhat = m.first[i] / bc1;
        const double vhat = m.second[i] / bc2;
        p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  std::int64_t steps() const { return t_; }

 private:
  struct Moments {
    Tensor first, second;
  };
  double lr_model_, lr_embedding_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::unordered_map<Parameter*, Moments> moments_;
};

// Scales all gradients so the global L2 norm does not exceed max_norm.
// Returns the pre-clip norm.
inline double clip_gradients(const std::vector<Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (Parameter* p : params)
    for (double gv : p->grad.v) sq += gv * gv;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Parameter* p : params)
      for (double& gv : p->grad.v) gv *= s;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Evaluation

struct PredictionRecord {
  std::string text;
  std::string aspect;
  int gold = -1;       // class index, -1 when unlabeled
  int predicted = 0;   // argmax class index
  std::array<double, 3> probs{};

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["text"] = text;
    j["aspect"] = aspect;
    if (gold >= 0) j["gold"] = polarity_name(static_cast<Polarity>(gold));
    j["predicted"] = polarity_name(static_cast<Polarity>(predicted));
    j["probs"] = probs;
    return j;
  }
};

// Argmax polarity for every (sentence, gold-aspect) pair, scored with
// accuracy and macro-F1.
inline EvalReport evaluate(const Model& model, const std::vector<LabeledSample>& samples,
                           std::vector<PredictionRecord>* dump = nullptr, int batch_size = 32) {
  if (samples.empty()) throw InputError("no samples to evaluate");
  std::mt19937_64 rng(0);  // unused in eval mode
  ForwardOptions opt;
  opt.training = false;
  opt.with_loss = false;

  std::vector<std::pair<int, int>> gold_pred;
  const int n = static_cast<int>(samples.size());
  for (int start = 0; start < n; start += batch_size) {
    std::vector<int> batch;
    for (int i = start; i < std::min(n, start + batch_size); ++i) batch.push_back(i);
    BatchPlan plan = make_batch_plan(samples, batch, model.vocab, model.params.dims.n_aspects,
                                     model.params.dims.max_edus);
    ForwardResult fr = forward_batch(model.params, plan, opt, rng);
    for (std::size_t pi = 0; pi < plan.gold_pairs.size(); ++pi) {
      const auto& [s, k] = plan.gold_pairs[pi];
      const std::array<double, 3> probs = fr.sentiment_for(s, k);
      const int pred = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
      const int gold = plan.gold_polarity[pi];
      gold_pred.emplace_back(gold, pred);
      if (dump) {
        PredictionRecord rec;
        rec.text = samples[static_cast<std::size_t>(batch[static_cast<std::size_t>(s)])].sentence.text;
        rec.aspect = model.aspects.names[static_cast<std::size_t>(k)];
        rec.gold = gold;
        rec.predicted = pred;
        rec.probs = probs;
        dump->push_back(std::move(rec));
      }
    }
  }
  return compute_metrics(gold_pred);
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout: magic, format version, a length-prefixed JSON header carrying the
// run config, vocabulary hash and the parameter manifest (names + shapes),
// then each parameter's values as little-endian 64-bit floats in manifest
// order.

namespace detail {

constexpr char kCheckpointMagic[8] = {'E', 'D', 'U', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_pod(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return in.gcount() == sizeof(T);
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelParams& params, std::uint64_t vocab_hash,
                            const nlohmann::json& config) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);

  nlohmann::json header;
  header["config"] = config;
  header["vocab_hash"] = vocab_hash;
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& p : params.all())
    manifest.push_back({{"name", p->name},
                        {"shape", p->value.shape},
                        {"group", p->group == Parameter::Group::embedding ? "embedding" : "model"}});
  header["params"] = std::move(manifest);
  const std::string hs = header.dump();

  out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  detail::write_pod(out, detail::kCheckpointVersion);
  detail::write_pod(out, static_cast<std::uint64_t>(hs.size()));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& p : params.all())
    out.write(reinterpret_cast<const char*>(p->value.v.data()),
              static_cast<std::streamsize>(p->value.v.size() * sizeof(double)));
  if (!out) throw IoError("write failed for " + path);
}

// Loads parameter values into an already-constructed model. The checkpoint
// must have been written for the same vocabulary and parameter layout.
// Returns the config the checkpoint was trained with.
inline nlohmann::json load_checkpoint(const std::string& path, ModelParams& params, std::uint64_t vocab_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);

  char magic[8];
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0)
    throw CompatError(path + " is not a checkpoint file");
  std::uint32_t version = 0;
  if (!detail::read_pod(in, version)) throw ParseError(path + ": truncated header");
  if (version != detail::kCheckpointVersion)
    throw CompatError(path + ": format version " + std::to_string(version) + ", expected " +
                      std::to_string(detail::kCheckpointVersion));
  std::uint64_t hlen = 0;
  if (!detail::read_pod(in, hlen)) throw ParseError(path + ": truncated header");
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (in.gcount() != static_cast<std::streamsize>(hlen)) throw ParseError(path + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": bad header: " + e.what());
  }
  if (header.at("vocab_hash").get<std::uint64_t>() != vocab_hash)
    throw CompatError(path + ": checkpoint was written for a different vocabulary");

  const auto& manifest = header.at("params");
  const auto& all = params.all();
  if (manifest.size() != all.size())
    throw CompatError(path + ": checkpoint has " + std::to_string(manifest.size()) + " parameters, model has " +
                      std::to_string(all.size()));

  // Read into staging first so a truncated file leaves the model untouched.
  std::vector<Tensor> staged;
  staged.reserve(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& entry = manifest[i];
    if (entry.at("name").get<std::string>() != all[i]->name)
      throw CompatError(path + ": parameter order mismatch at " + all[i]->name);
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    if (shape != all[i]->value.shape) throw CompatError(path + ": shape mismatch for " + all[i]->name);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.v.data()), static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(t.v.size() * sizeof(double)))
      throw ParseError(path + ": truncated at parameter " + all[i]->name);
    staged.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < all.size(); ++i) all[i]->value = std::move(staged[i]);
  return header.at("config");
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainResult {
  double best_val_accuracy = -1.0;
  double best_val_macro_f1 = 0.0;
  int best_step = -1;
  int steps = 0;
  int epochs = 0;
  bool stopped_early = false;
  std::vector<nlohmann::json> log;  // per-step losses and per-eval metrics
};

// Epoch loop with seeded shuffling, a validation pass every eval_every
// mini-batches, best-checkpoint tracking on validation accuracy, and
// patience-based early stopping. When `checkpoint_path` is non-empty, the
// best model seen so far is (re)written on every improvement; on return the
// in-memory parameters are restored to the best state. Without a validation
// set the loop runs all epochs and keeps the final state.
inline TrainResult train(Model& model, const std::vector<LabeledSample>& train_set,
                         const std::vector<LabeledSample>& val_set, const TrainConfig& cfg,
                         const std::string& checkpoint_path = "", const nlohmann::json& config_echo = {},
                         std::ostream* log_stream = nullptr) {
  cfg.validate();
  if (train_set.empty()) throw InputError("empty training set");

  std::mt19937_64 shuffle_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  Adam adam(cfg.lr_model, cfg.lr_embedding);
  std::vector<Parameter*> params = model.params.parameters();

  ForwardOptions opt;
  opt.training = true;
  opt.dropout = cfg.dropout;
  opt.lambdas = cfg.lambdas;

  TrainResult res;
  std::vector<Tensor> best_snapshot;
  int evals_without_improvement = 0;
  bool stop = false;

  auto log_line = [&](nlohmann::json j) {
    if (log_stream) *log_stream << j.dump() << '\n';
    res.log.push_back(std::move(j));
  };

  auto run_validation = [&]() {
    EvalReport rep = evaluate(model, val_set, nullptr, cfg.batch_size);
    const bool improved = rep.accuracy > res.best_val_accuracy;
    if (improved) {
      res.best_val_accuracy = rep.accuracy;
      res.best_val_macro_f1 = rep.macro_f1;
      res.best_step = res.steps;
      best_snapshot = model.params.snapshot();
      if (!checkpoint_path.empty())
        save_checkpoint(checkpoint_path, model.params, model.vocab.hash(), config_echo);
      evals_without_improvement = 0;
    } else {
      ++evals_without_improvement;
    }
    log_line({{"step", res.steps},
              {"val_accuracy", rep.accuracy},
              {"val_macro_f1", rep.macro_f1},
              {"best_val_accuracy", res.best_val_accuracy},
              {"improved", improved}});
    if (evals_without_improvement >= cfg.patience) {
      stop = true;
      res.stopped_early = true;
    }
  };

  try {
    for (int epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
      res.epochs = epoch + 1;
      for (const std::vector<int>& batch :
           make_batches(static_cast<int>(train_set.size()), cfg.batch_size, shuffle_rng)) {
        BatchPlan plan =
            make_batch_plan(train_set, batch, model.vocab, model.params.dims.n_aspects, model.params.dims.max_edus);
        model.params.zero_grad();
        ForwardResult fr = forward_batch(model.params, plan, opt, dropout_rng);
        fr.graph->backward(fr.loss_total.id);
        model.params.freeze_padding_row();
        const double grad_norm = clip_gradients(params, cfg.clip_norm);
        adam.step(params);

        ++res.steps;
        const LossBreakdown lb = fr.breakdown();
        log_line({{"step", res.steps},
                  {"epoch", epoch},
                  {"loss_total", lb.total},
                  {"loss_sentiment", lb.sentiment_ce},
                  {"loss_presence", lb.presence_bce},
                  {"loss_orth", lb.orthogonal},
                  {"grad_norm", grad_norm}});

        if (!val_set.empty() && res.steps % cfg.eval_every == 0) {
          run_validation();
          if (stop) break;
        }
      }
    }
  } catch (const NumericError&) {
    // Divergence: put the last good parameters back before propagating. The
    // checkpoint file, written only on improvement, is already intact.
    if (!best_snapshot.empty()) model.params.restore(best_snapshot);
    throw;
  }

  if (res.best_step < 0) {
    // Run ended before the first scheduled validation: score (or save) the
    // final state so there is always a checkpoint.
    if (!val_set.empty())
      run_validation();
    else if (!checkpoint_path.empty())
      save_checkpoint(checkpoint_path, model.params, model.vocab.hash(), config_echo);
  }
  if (!best_snapshot.empty()) model.params.restore(best_snapshot);
  return res;
}

}  // namespace edua
