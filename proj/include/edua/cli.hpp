#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "edua/config.hpp"
#include "edua/data.hpp"
#include "edua/errors.hpp"
#include "edua/segment.hpp"
#include "edua/sentence.hpp"
#include "edua/train.hpp"

namespace edua::cli {

namespace detail {

inline double percent(double x) { return std::round(x * 10000.0) / 100.0; }

// Common knobs shared by the model-running subcommands.
struct CommonArgs {
  std::string config_path;
  std::string dataset_path;
  std::string glove_path;
  std::string out_dir;
  std::optional<int> seed;
  std::optional<double> lambda1, lambda2, lambda3;
  bool no_reg = false;
  bool no_aux = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run config JSON (flat dotted keys)");
    cmd->add_option("--dataset", dataset_path, "dataset config JSON, merged over --config");
    cmd->add_option("--glove", glove_path, "pretrained embedding file (overrides data.glove)");
    cmd->add_option("--out", out_dir, "output directory (overrides out.dir)");
    cmd->add_option("--seed", seed, "random seed (overrides train.seed)");
    cmd->add_option("--lambda1", lambda1, "sentiment loss weight");
    cmd->add_option("--lambda2", lambda2, "aspect-presence loss weight");
    cmd->add_option("--lambda3", lambda3, "orthogonality loss weight");
    cmd->add_flag("--no_reg", no_reg, "ablation: drop orthogonal regularization (lambda3 = 0)");
    cmd->add_flag("--no_aux", no_aux, "ablation: drop auxiliary aspect prediction (lambda2 = 0)");
    cmd->allow_extras();
  }

  // Builds the effective config: defaults < base < config file < dataset
  // file < named flags < dotted-key extras.
  RunConfig build(CLI::App* cmd, const nlohmann::json& base = {}) const {
    RunConfig cfg = RunConfig::defaults();
    if (!base.empty()) cfg.merge(base, "checkpoint config");
    if (!config_path.empty()) cfg.merge_file(config_path);
    if (!dataset_path.empty()) cfg.merge_file(dataset_path);
    if (!glove_path.empty()) cfg.set("data.glove", glove_path);
    if (!out_dir.empty()) cfg.set("out.dir", out_dir);
    if (seed) cfg.set("train.seed", *seed);
    if (lambda1) cfg.set("train.lambda1", *lambda1);
    if (lambda2) cfg.set("train.lambda2", *lambda2);
    if (lambda3) cfg.set("train.lambda3", *lambda3);

    bool extra_l2 = false, extra_l3 = false;
    const std::vector<std::string> extras = cmd->remaining();
    for (std::size_t i = 0; i < extras.size(); i += 2) {
      const std::string& key = extras[i];
      if (key.rfind("--", 0) != 0 || key.find('.') == std::string::npos)
        throw ConfigError("unrecognized argument '" + key + "' (overrides look like --section.key value)");
      if (i + 1 >= extras.size()) throw ConfigError("missing value for override " + key);
      const std::string name = key.substr(2);
      cfg.set_from_string(name, extras[i + 1]);
      extra_l2 = extra_l2 || name == "train.lambda2";
      extra_l3 = extra_l3 || name == "train.lambda3";
    }

    if (no_reg && (lambda3 || extra_l3))
      throw ConfigError("--no_reg conflicts with an explicit lambda3 override");
    if (no_aux && (lambda2 || extra_l2))
      throw ConfigError("--no_aux conflicts with an explicit lambda2 override");
    if (no_reg) cfg.set("train.lambda3", 0.0);
    if (no_aux) cfg.set("train.lambda2", 0.0);
    return cfg;
  }
};

inline void require_out_dir(const RunConfig& cfg) {
  if (cfg.str("out.dir").empty()) throw ConfigError("an output directory is required (--out or out.dir)");
}

inline void write_effective_config(const RunConfig& cfg, const std::filesystem::path& dir) {
  std::ofstream out(dir / "effective_config.json");
  if (!out) throw IoError("cannot write " + (dir / "effective_config.json").string());
  out << cfg.echo().dump(2) << '\n';
}

inline Model load_model_from_checkpoint(const std::string& ckpt_path, const RunConfig& cfg, LoadedData& data) {
  data = load_dataset(cfg);
  Model model = Model::init(cfg.model_dims(), data.vocab, data.aspects,
                            static_cast<std::uint64_t>(cfg.integer("train.seed")));
  load_checkpoint(ckpt_path, model.params, model.vocab.hash());
  return model;
}

inline nlohmann::json read_checkpoint_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in) throw ParseError(path + ": truncated header");
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw ParseError(path + ": truncated header");
  try {
    return nlohmann::json::parse(hs).at("config");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": bad header: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// segment

inline int cmd_segment(const std::string& input, const std::string& output, bool presegmented) {
  std::ifstream fin;
  std::istream* in = &std::cin;
  if (!input.empty() && input != "-") {
    fin.open(input);
    if (!fin) throw IoError("cannot open " + input);
    in = &fin;
  }
  std::ofstream fout;
  std::ostream* out = &std::cout;
  if (!output.empty() && output != "-") {
    fout.open(output);
    if (!fout) throw IoError("cannot write " + output);
    out = &fout;
  }

  std::string line;
  int line_no = 0;
  while (std::getline(*in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      std::cerr << "warning: skipping empty line " << line_no << '\n';
      continue;
    }
    AnnotatedSentence s;
    if (presegmented) {
      s = parse_jsonl_line(line, line_no);
    } else {
      s.sentence = heuristic_segment(line);
    }
    *out << to_jsonl(s).dump() << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train

inline nlohmann::json train_once(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_effective_config(cfg, out_dir);

  LoadedData data = load_dataset(cfg);
  std::cerr << "loaded " << data.train.size() << " train / " << data.val.size() << " val / " << data.test.size()
            << " test sentences; vocab " << data.vocab.size() << " (pretrained coverage "
            << percent(data.vocab.coverage()) << "%)\n";

  Model model = Model::init(cfg.model_dims(), data.vocab, data.aspects,
                            static_cast<std::uint64_t>(cfg.integer("train.seed")));
  TrainConfig tc = cfg.train_config();

  std::ofstream log_stream(out_dir / "metrics.jsonl");
  if (!log_stream) throw IoError("cannot write " + (out_dir / "metrics.jsonl").string());
  TrainResult tr = train(model, data.train, data.val, tc, (out_dir / "model.ckpt").string(), cfg.echo(),
                         &log_stream);

  nlohmann::json summary;
  summary["steps"] = tr.steps;
  summary["epochs"] = tr.epochs;
  summary["stopped_early"] = tr.stopped_early;
  summary["best_step"] = tr.best_step;
  summary["best_val_accuracy"] = tr.best_val_accuracy;
  summary["best_val_macro_f1"] = tr.best_val_macro_f1;
  if (!data.test.empty()) {
    EvalReport rep = evaluate(model, data.test);
    summary["test"] = rep.to_json();
  }
  return summary;
}

inline int cmd_train(const RunConfig& cfg) {
  require_out_dir(cfg);
  nlohmann::json summary = train_once(cfg, cfg.str("out.dir"));
  std::cout << summary.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// eval / predict / inspect

inline int cmd_eval(const std::string& ckpt, const RunConfig& cfg, const std::string& split,
                    const std::string& dump_path) {
  LoadedData data;
  Model model = load_model_from_checkpoint(ckpt, cfg, data);
  const std::vector<LabeledSample>* samples = nullptr;
  if (split == "test")
    samples = &data.test;
  else if (split == "val")
    samples = &data.val;
  else if (split == "train")
    samples = &data.train;
  else
    throw ConfigError("unknown split '" + split + "'");
  if (samples->empty()) throw ConfigError("split '" + split + "' is empty; check the dataset config");

  std::vector<PredictionRecord> dump;
  EvalReport rep = evaluate(model, *samples, dump_path.empty() ? nullptr : &dump);
  if (!dump_path.empty()) {
    std::ofstream out(dump_path);
    if (!out) throw IoError("cannot write " + dump_path);
    for (const PredictionRecord& r : dump) out << r.to_json().dump() << '\n';
  }
  std::cout << rep.to_json().dump(2) << '\n';
  return 0;
}

inline int cmd_predict(const std::string& ckpt, const RunConfig& cfg, const std::string& input_path) {
  LoadedData data;
  Model model = load_model_from_checkpoint(ckpt, cfg, data);
  std::vector<AnnotatedSentence> sentences = load_presegmented(input_path);

  ForwardOptions opt;
  opt.training = false;
  opt.with_loss = false;
  std::mt19937_64 rng(0);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    BatchPlan plan = make_batch_plan(sentences, {static_cast<int>(i)}, model.vocab, model.aspects,
                                     model.params.dims.max_edus);
    ForwardResult fr = forward_batch(model.params, plan, opt, rng);
    nlohmann::json preds = nlohmann::json::array();
    for (const auto& [s, k] : plan.gold_pairs) {
      const std::array<double, 3> probs = fr.sentiment_for(s, k);
      const int argmax = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
      preds.push_back({{"aspect", model.aspects.names[static_cast<std::size_t>(k)]},
                       {"polarity", polarity_name(static_cast<Polarity>(argmax))},
                       {"confidence", probs[static_cast<std::size_t>(argmax)]}});
    }
    std::cout << nlohmann::json{{"text", sentences[i].sentence.text}, {"predictions", preds}}.dump() << '\n';
  }
  return 0;
}

// Attention diagnostics: per-aspect word scores inside each EDU plus the
// EDU-by-aspect matrix, as percentages rounded to two decimals.
inline int cmd_inspect(const std::string& ckpt, const RunConfig& cfg, const std::string& input_path, bool raw) {
  LoadedData data;
  Model model = load_model_from_checkpoint(ckpt, cfg, data);

  std::vector<AnnotatedSentence> sentences;
  if (raw) {
    std::ifstream in(input_path);
    if (!in) throw IoError("cannot open " + input_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      AnnotatedSentence s;
      s.sentence = heuristic_segment(line);
      sentences.push_back(std::move(s));
    }
  } else {
    sentences = load_presegmented(input_path);
  }

  ForwardOptions opt;
  opt.training = false;
  opt.with_loss = false;
  std::mt19937_64 rng(0);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    BatchPlan plan = make_batch_plan(sentences, {static_cast<int>(i)}, model.vocab, model.aspects,
                                     model.params.dims.max_edus);
    ForwardResult fr = forward_batch(model.params, plan, opt, rng);

    nlohmann::json j;
    j["text"] = sentences[i].sentence.text;
    nlohmann::json edu_texts = nlohmann::json::array();
    for (const Edu& e : sentences[i].sentence.edus) edu_texts.push_back(e.joined());
    j["edus"] = std::move(edu_texts);

    for (int k = 0; k < model.aspects.size(); ++k) {
      const std::string& aspect = model.aspects.names[static_cast<std::size_t>(k)];
      nlohmann::json alpha = nlohmann::json::array();
      for (int e : plan.sentence_edus[0]) {
        nlohmann::json word_scores = nlohmann::json::array();
        for (double a : fr.word_attention_for(e, k)) word_scores.push_back(percent(a));
        alpha.push_back(std::move(word_scores));
      }
      j["alpha"][aspect] = std::move(alpha);
      nlohmann::json beta = nlohmann::json::array();
      for (double b : fr.edu_attention_for(0, k)) beta.push_back(percent(b));
      j["beta"][aspect] = std::move(beta);
    }
    Tensor m = fr.attention_matrix(0);
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < m.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < m.cols(); ++c) row.push_back(percent(m.at(r, c)));
      rows.push_back(std::move(row));
    }
    j["beta_matrix"] = std::move(rows);
    std::cout << j.dump() << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// seeds: the multi-seed protocol, reporting mean and sample standard
// deviation of test accuracy and macro-F1.

inline int cmd_seeds(const RunConfig& base_cfg, int n_seeds) {
  if (n_seeds < 1) throw ConfigError("--n must be >= 1");
  require_out_dir(base_cfg);
  if (base_cfg.str("data.test_xml").empty()) throw ConfigError("seeds requires data.test_xml");

  const std::filesystem::path out_root = base_cfg.str("out.dir");
  std::vector<double> accs, f1s;
  nlohmann::json runs = nlohmann::json::array();
  for (int s = 1; s <= n_seeds; ++s) {
    RunConfig cfg = base_cfg;
    cfg.set("train.seed", s);
    const std::filesystem::path run_dir = out_root / ("seed_" + std::to_string(s));
    cfg.set("out.dir", run_dir.string());
    nlohmann::json summary = train_once(cfg, run_dir);
    const double acc = summary.at("test").at("accuracy").get<double>();
    const double f1 = summary.at("test").at("macro_f1").get<double>();
    accs.push_back(acc);
    f1s.push_back(f1);
    runs.push_back({{"seed", s}, {"test_accuracy", acc}, {"test_macro_f1", f1}});
    std::cerr << "seed " << s << ": accuracy " << acc << ", macro-F1 " << f1 << '\n';
  }

  auto stats = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    if (xs.size() > 1) {
      for (double x : xs) var += (x - mean) * (x - mean);
      var /= static_cast<double>(xs.size() - 1);
    }
    return std::pair<double, double>(mean, std::sqrt(var));
  };
  const auto [acc_mean, acc_std] = stats(accs);
  const auto [f1_mean, f1_std] = stats(f1s);

  nlohmann::json out;
  out["n"] = n_seeds;
  out["runs"] = std::move(runs);
  out["test_accuracy"] = {{"mean", acc_mean}, {"std", acc_std}};
  out["test_macro_f1"] = {{"mean", f1_mean}, {"std", f1_std}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

}  // namespace detail

// Entry point used by the binary and by tests. Returns the process exit
// code: 0 success, 2 configuration/input errors, 3 numeric failures.
inline int run(std::vector<std::string> args) {
  CLI::App app{"EDU-level sparse attention for aspect-category sentiment analysis"};
  app.require_subcommand(1);

  // segment
  auto* seg = app.add_subcommand("segment", "split raw sentences (or re-split JSONL) into EDUs");
  std::string seg_input, seg_output;
  bool seg_presegmented = false;
  seg->add_option("input", seg_input, "input file of sentences, '-' for stdin")->default_val("-");
  seg->add_option("-o,--output", seg_output, "output JSONL file, '-' for stdout")->default_val("-");
  seg->add_flag("--presegmented", seg_presegmented, "input is JSONL with EDU spans; apply conjunction splits only");

  // train
  auto* tr = app.add_subcommand("train", "train a model and keep the best-validation checkpoint");
  detail::CommonArgs tr_args;
  tr_args.attach(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint and print the metric report");
  detail::CommonArgs ev_args;
  std::string ev_ckpt, ev_split = "test", ev_dump;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--split", ev_split, "train | val | test");
  ev->add_option("--dump-predictions", ev_dump, "write per-pair predictions JSONL here");
  ev_args.attach(ev);

  // predict
  auto* pr = app.add_subcommand("predict", "predict polarities for JSONL sentences with gold aspects");
  detail::CommonArgs pr_args;
  std::string pr_ckpt, pr_input;
  pr->add_option("--ckpt", pr_ckpt, "checkpoint file")->required();
  pr->add_option("--input", pr_input, "JSONL input")->required();
  pr_args.attach(pr);

  // inspect
  auto* in = app.add_subcommand("inspect", "dump word- and EDU-level attention scores");
  detail::CommonArgs in_args;
  std::string in_ckpt, in_input;
  bool in_raw = false;
  in->add_option("--ckpt", in_ckpt, "checkpoint file")->required();
  in->add_option("--input", in_input, "JSONL input (or raw text lines with --raw)")->required();
  in->add_flag("--raw", in_raw, "treat input as raw sentences; segment heuristically");
  in_args.attach(in);

  // seeds
  auto* sd = app.add_subcommand("seeds", "train and evaluate across seeds, report mean and std");
  detail::CommonArgs sd_args;
  int sd_n = 5;
  sd->add_option("--n", sd_n, "number of seeds (1..n)");
  sd_args.attach(sd);

  std::reverse(args.begin(), args.end());  // CLI11 consumes args back to front
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (seg->parsed()) return detail::cmd_segment(seg_input, seg_output, seg_presegmented);
    if (tr->parsed()) return detail::cmd_train(tr_args.build(tr));
    if (ev->parsed()) {
      nlohmann::json base = detail::read_checkpoint_config(ev_ckpt);
      return detail::cmd_eval(ev_ckpt, ev_args.build(ev, base), ev_split, ev_dump);
    }
    if (pr->parsed()) {
      nlohmann::json base = detail::read_checkpoint_config(pr_ckpt);
      return detail::cmd_predict(pr_ckpt, pr_args.build(pr, base), pr_input);
    }
    if (in->parsed()) {
      nlohmann::json base = detail::read_checkpoint_config(in_ckpt);
      return detail::cmd_inspect(in_ckpt, in_args.build(in, base), in_input, in_raw);
    }
    if (sd->parsed()) return detail::cmd_seeds(sd_args.build(sd), sd_n);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}

}  // namespace edua::cli
