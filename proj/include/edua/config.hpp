#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edua/data.hpp"
#include "edua/errors.hpp"
#include "edua/model.hpp"
#include "edua/train.hpp"

namespace edua {

// Run configuration: a flat map of dotted keys to JSON values. Config files
// are JSON objects in the same shape; any key can be overridden on the
// command line with `--key value`. Unknown keys are rejected to catch typos.
class RunConfig {
 public:
  static RunConfig defaults() {
    RunConfig c;
    c.values_ = {
        {"model.word_dim", 300},
        {"model.aspect_dim", 300},
        {"model.fused_dim", 300},
        {"model.hidden_dim", 150},
        {"model.max_edus", 16},
        {"model.orth_norm", "frobenius"},
        {"train.lr_model", 1e-3},
        {"train.lr_embedding", 1e-4},
        {"train.batch_size", 32},
        {"train.eval_every", 16},
        {"train.dropout", 0.5},
        {"train.lambda1", 1.0},
        {"train.lambda2", 1.0},
        {"train.lambda3", 0.1},
        {"train.patience", 10},
        {"train.max_epochs", 100},
        {"train.seed", 1},
        {"train.clip_norm", 5.0},
        {"train.val_fraction", 0.2},
        {"data.name", ""},
        {"data.aspects", nlohmann::json::array()},
        {"data.aspect_init_words", nlohmann::json::object()},
        {"data.train_xml", ""},
        {"data.val_xml", ""},
        {"data.test_xml", ""},
        {"data.presegmented_train", ""},
        {"data.presegmented_val", ""},
        {"data.presegmented_test", ""},
        {"data.glove", ""},
        {"out.dir", ""},
    };
    return c;
  }

  void merge(const nlohmann::json& flat, const std::string& origin) {
    if (!flat.is_object()) throw ConfigError(origin + ": config must be a JSON object of dotted keys");
    for (const auto& [key, value] : flat.items()) set(key, value, origin);
  }

  void merge_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
    merge(j, path);
  }

  void set(const std::string& key, const nlohmann::json& value, const std::string& origin = "override") {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(origin + ": unknown config key '" + key + "'");
    *it = value;
  }

  // Parses a command-line value: JSON where possible, plain string otherwise.
  void set_from_string(const std::string& key, const std::string& raw) {
    nlohmann::json v;
    try {
      v = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
      v = raw;
    }
    set(key, v, "command line");
  }

  const nlohmann::json& echo() const { return values_; }

  double num(const std::string& key) const {
    const nlohmann::json& v = get(key);
    if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
    return v.get<double>();
  }

  int integer(const std::string& key) const {
    const nlohmann::json& v = get(key);
    if (!v.is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
    return v.get<int>();
  }

  std::string str(const std::string& key) const {
    const nlohmann::json& v = get(key);
    if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
    return v.get<std::string>();
  }

  ModelDims model_dims() const {
    ModelDims d;
    d.word_dim = integer("model.word_dim");
    d.aspect_dim = integer("model.aspect_dim");
    d.fused_dim = integer("model.fused_dim");
    d.hidden_dim = integer("model.hidden_dim");
    d.max_edus = integer("model.max_edus");
    d.orth_norm = orth_norm_from(str("model.orth_norm"));
    return d;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.lr_model = num("train.lr_model");
    t.lr_embedding = num("train.lr_embedding");
    t.batch_size = integer("train.batch_size");
    t.eval_every = integer("train.eval_every");
    t.dropout = num("train.dropout");
    t.lambdas.sentiment = num("train.lambda1");
    t.lambdas.presence = num("train.lambda2");
    t.lambdas.orthogonal = num("train.lambda3");
    t.patience = integer("train.patience");
    t.max_epochs = integer("train.max_epochs");
    t.seed = static_cast<std::uint64_t>(integer("train.seed"));
    t.clip_norm = num("train.clip_norm");
    t.validate();
    return t;
  }

  AspectSet aspect_set() const {
    const nlohmann::json& names = get("data.aspects");
    if (!names.is_array() || names.empty())
      throw ConfigError("data.aspects must name at least one aspect category");
    AspectSet a;
    for (const auto& n : names) a.names.push_back(n.get<std::string>());
    const nlohmann::json& init = get("data.aspect_init_words");
    for (const auto& [aspect, word] : init.items()) {
      if (a.id_of(aspect) < 0) throw ConfigError("aspect_init_words names unknown aspect '" + aspect + "'");
      a.init_word[aspect] = word.is_null() ? "" : word.get<std::string>();
    }
    return a;
  }

 private:
  nlohmann::json values_;

  const nlohmann::json& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return *it;
  }
};

// Loaded splits plus the vocabulary bound to them.
struct LoadedData {
  AspectSet aspects;
  std::vector<LabeledSample> train, val, test;
  Vocab vocab;
};

// Loads the dataset named by the config: train (required), test (optional),
// and validation either from its own file or as a seeded split of train.
// The vocabulary is collected across all splits so pretrained rows are
// available at test time; embeddings barely move under the small embedding
// learning rate.
inline LoadedData load_dataset(const RunConfig& cfg) {
  LoadedData d;
  d.aspects = cfg.aspect_set();
  const int max_edus = cfg.integer("model.max_edus");

  const std::string train_xml = cfg.str("data.train_xml");
  if (train_xml.empty()) throw ConfigError("data.train_xml is required");
  std::vector<LabeledSample> full_train =
      load_semeval_xml(train_xml, d.aspects, cfg.str("data.presegmented_train"), max_edus);

  const std::string val_xml = cfg.str("data.val_xml");
  if (!val_xml.empty()) {
    d.train = std::move(full_train);
    d.val = load_semeval_xml(val_xml, d.aspects, cfg.str("data.presegmented_val"), max_edus);
  } else {
    std::mt19937_64 split_rng(static_cast<std::uint64_t>(cfg.integer("train.seed")) ^ 0x5eed51u);
    std::tie(d.train, d.val) = split_train_val(full_train, cfg.num("train.val_fraction"), split_rng);
  }

  const std::string test_xml = cfg.str("data.test_xml");
  if (!test_xml.empty())
    d.test = load_semeval_xml(test_xml, d.aspects, cfg.str("data.presegmented_test"), max_edus);

  std::mt19937_64 emb_rng(static_cast<std::uint64_t>(cfg.integer("train.seed")) ^ 0xe8bedull);
  d.vocab = load_glove(cfg.str("data.glove"), collect_tokens({&d.train, &d.val, &d.test}),
                       cfg.integer("model.word_dim"), emb_rng);
  return d;
}

}  // namespace edua
