#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "edua/errors.hpp"
#include "edua/segment.hpp"
#include "edua/tensor.hpp"

namespace edua {

// Aspect inventory of a dataset. Aspect ids are positions in `names`.
// init_word maps an aspect to the vocabulary word used to seed its
// embedding; an empty string requests random initialization (for labels
// like "anecdotes/miscellaneous" with no representative word).
struct AspectSet {
  std::vector<std::string> names;
  std::unordered_map<std::string, std::string> init_word;

  int size() const { return static_cast<int>(names.size()); }

  int id_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }
};

struct LabeledSample {
  SegmentedSentence sentence;
  std::vector<std::pair<int, Polarity>> labels;  // (aspect id, polarity), aspect ids unique
};

struct DatasetStats {
  int single = 0;     // sentences with exactly one labeled aspect
  int multiple = 0;   // sentences with two or more
  int polarity[3] = {0, 0, 0};

  int sentences() const { return single + multiple; }
  int labels() const { return polarity[0] + polarity[1] + polarity[2]; }
};

inline DatasetStats compute_stats(const std::vector<LabeledSample>& samples) {
  DatasetStats st;
  for (const LabeledSample& s : samples) {
    (s.labels.size() == 1 ? st.single : st.multiple) += 1;
    for (const auto& [aspect, pol] : s.labels) st.polarity[static_cast<int>(pol)] += 1;
  }
  return st;
}

namespace detail {

// Optional sidecar of pre-segmented sentences, keyed by exact text.
inline std::unordered_map<std::string, SegmentedSentence> index_presegmented(const std::string& path) {
  std::unordered_map<std::string, SegmentedSentence> out;
  for (AnnotatedSentence& s : load_presegmented(path)) out.emplace(s.sentence.text, std::move(s.sentence));
  return out;
}

}  // namespace detail

// Loads a SemEval-2014-schema XML file (also used by MAMS): <sentences> of
// <sentence> with <text> and <aspectCategories>/<aspectCategory
// category=... polarity=.../>. Labels with "conflict" polarity are dropped
// pair-wise; sentences left without labels are dropped entirely. EDU
// boundaries come from the pre-segmented sidecar when the sentence text is
// found there, otherwise from the heuristic segmenter.
inline std::vector<LabeledSample> load_semeval_xml(const std::string& path, const AspectSet& aspects,
                                                   const std::string& presegmented_path = "",
                                                   int max_edus = 0) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_xml(path, tree);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(path + ": " + e.what());
  }

  std::unordered_map<std::string, SegmentedSentence> sidecar;
  if (!presegmented_path.empty()) sidecar = detail::index_presegmented(presegmented_path);

  auto sentences = tree.get_child_optional("sentences");
  if (!sentences) throw ParseError(path + ": missing <sentences> root");

  std::vector<LabeledSample> out;
  int sent_no = 0;
  for (const auto& [tag, node] : *sentences) {
    if (tag != "sentence") continue;
    ++sent_no;
    const std::string where = path + " sentence #" + std::to_string(sent_no);
    const std::string text = node.get<std::string>("text", "");
    if (text.empty()) throw ParseError(where + ": missing <text>");

    std::vector<std::pair<int, Polarity>> labels;
    auto cats = node.get_child_optional("aspectCategories");
    if (cats) {
      for (const auto& [ctag, cnode] : *cats) {
        if (ctag != "aspectCategory") continue;
        const std::string category = cnode.get<std::string>("<xmlattr>.category", "");
        const std::string polarity = cnode.get<std::string>("<xmlattr>.polarity", "");
        if (polarity == "conflict") continue;  // drop the pair, keep the sentence
        const int aspect_id = aspects.id_of(category);
        if (aspect_id < 0) throw ValidationError(where + ": unknown aspect category '" + category + "'");
        const Polarity pol = polarity_from(polarity, where);
        bool duplicate = false;
        for (const auto& [prev_id, prev_pol] : labels) {
          if (prev_id != aspect_id) continue;
          if (prev_pol != pol)
            throw ValidationError(where + ": aspect '" + category + "' labeled with two polarities");
          duplicate = true;
        }
        if (!duplicate) labels.emplace_back(aspect_id, pol);
      }
    }
    if (labels.empty()) continue;  // conflict-only or unlabeled sentence

    LabeledSample sample;
    auto it = sidecar.find(text);
    sample.sentence = it != sidecar.end() ? it->second : heuristic_segment(text);
    sample.labels = std::move(labels);
    if (max_edus > 0 && static_cast<int>(sample.sentence.edus.size()) > max_edus)
      throw ValidationError(where + ": sentence has " + std::to_string(sample.sentence.edus.size()) +
                            " EDUs, limit is " + std::to_string(max_edus));
    out.push_back(std::move(sample));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL round-trip for loaded samples

inline AnnotatedSentence to_annotated(const LabeledSample& s, const AspectSet& aspects) {
  AnnotatedSentence a;
  a.sentence = s.sentence;
  for (const auto& [aspect, pol] : s.labels)
    a.labels.push_back(AspectLabel{aspects.names[static_cast<std::size_t>(aspect)], pol});
  return a;
}

inline LabeledSample to_sample(const AnnotatedSentence& a, const AspectSet& aspects) {
  LabeledSample s;
  s.sentence = a.sentence;
  for (const AspectLabel& l : a.labels) {
    const int id = aspects.id_of(l.aspect);
    if (id < 0) throw ValidationError("unknown aspect '" + l.aspect + "'");
    s.labels.emplace_back(id, l.polarity);
  }
  return s;
}

inline void write_samples_jsonl(std::ostream& out, const std::vector<LabeledSample>& samples,
                                const AspectSet& aspects) {
  for (const LabeledSample& s : samples) out << to_jsonl(to_annotated(s, aspects)).dump() << '\n';
}

inline std::vector<LabeledSample> read_samples_jsonl(std::istream& in, const AspectSet& aspects) {
  std::vector<LabeledSample> out;
  for (const AnnotatedSentence& a : load_presegmented(in)) out.push_back(to_sample(a, aspects));
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary and pretrained embeddings

struct Vocab {
  static constexpr int pad_id = 0;
  static constexpr int unk_id = 1;

  std::vector<std::string> tokens;  // tokens[id]; [0]/[1] are reserved
  std::unordered_map<std::string, int> ids;
  Tensor embeddings;       // V x dim initial matrix; row 0 stays zero
  int pretrained_hits = 0; // rows copied from the embedding file

  int size() const { return static_cast<int>(tokens.size()); }

  int id_of(const std::string& tok) const {
    auto it = ids.find(tok);
    return it == ids.end() ? unk_id : it->second;
  }

  double coverage() const {
    const int real = size() - 2;
    return real > 0 ? static_cast<double>(pretrained_hits) / real : 0.0;
  }

  // FNV-1a over the token list; identifies the vocabulary in checkpoints.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const std::string& t : tokens) {
      for (char c : t) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
      }
      h ^= static_cast<unsigned char>('\n');
      h *= 1099511628211ull;
    }
    return h;
  }
};

// Collects the sorted set of corpus tokens across the given splits.
inline std::vector<std::string> collect_tokens(const std::vector<const std::vector<LabeledSample>*>& splits) {
  std::set<std::string> uniq;
  for (const auto* split : splits)
    for (const LabeledSample& s : *split)
      for (const Edu& e : s.sentence.edus)
        for (const Token& t : e.tokens) uniq.insert(t.text);
  return {uniq.begin(), uniq.end()};
}

// Builds the vocabulary and its initial embedding matrix. Rows for tokens
// present in the embeddings file are copied verbatim; everything else
// (including <unk>) is uniform(-0.1, 0.1). Row 0 (<pad>) is all-zero and is
// kept frozen by the optimizer path. Pass an empty path to initialize the
// whole table randomly.
inline Vocab load_glove(const std::string& path, const std::vector<std::string>& corpus_tokens, int dim,
                        std::mt19937_64& rng) {
  Vocab v;
  v.tokens = {"<pad>", "<unk>"};
  v.tokens.insert(v.tokens.end(), corpus_tokens.begin(), corpus_tokens.end());
  for (std::size_t i = 0; i < v.tokens.size(); ++i) v.ids.emplace(v.tokens[i], static_cast<int>(i));
  if (v.ids.size() != v.tokens.size()) throw ValidationError("duplicate tokens in vocabulary input");

  v.embeddings = Tensor({v.size(), dim});
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  for (int r = Vocab::unk_id; r < v.size(); ++r)
    for (int c = 0; c < dim; ++c) v.embeddings.at(r, c) = dist(rng);

  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const std::size_t sp = line.find(' ');
      if (sp == std::string::npos)
        throw ParseError(path + " line " + std::to_string(line_no) + ": no values after token");
      auto it = v.ids.find(line.substr(0, sp));
      if (it == v.ids.end()) continue;
      const int row = it->second;
      std::istringstream vals(line.substr(sp + 1));
      int c = 0;
      double x;
      while (vals >> x) {
        if (c >= dim) break;
        v.embeddings.at(row, c++) = x;
      }
      if (c != dim || (vals >> x))
        throw ParseError(path + " line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                         " values");
      ++v.pretrained_hits;
    }
  }
  for (int c = 0; c < dim; ++c) v.embeddings.at(Vocab::pad_id, c) = 0.0;
  return v;
}

// ---------------------------------------------------------------------------
// Splits and batches

// Seeded random split by sentence; the validation share is round(fraction*N).
inline std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> split_train_val(
    const std::vector<LabeledSample>& samples, double fraction, std::mt19937_64& rng) {
  if (fraction <= 0.0 || fraction >= 1.0)
    throw ConfigError("validation fraction must be in (0, 1), got " + std::to_string(fraction));
  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_val = static_cast<int>(std::llround(fraction * static_cast<double>(samples.size())));
  std::vector<LabeledSample> val, train;
  val.reserve(static_cast<std::size_t>(n_val));
  train.reserve(samples.size() - static_cast<std::size_t>(n_val));
  for (std::size_t i = 0; i < order.size(); ++i)
    (static_cast<int>(i) < n_val ? val : train).push_back(samples[static_cast<std::size_t>(order[i])]);
  return {std::move(train), std::move(val)};
}

// Shuffled fixed-size batches of sample indices; the last batch may be short.
inline std::vector<std::vector<int>> make_batches(int n_samples, int batch_size, std::mt19937_64& rng) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<int> order(static_cast<std::size_t>(n_samples));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<int>> batches;
  for (int start = 0; start < n_samples; start += batch_size) {
    const int end = std::min(n_samples, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

// ---------------------------------------------------------------------------
// Batch layout fed to the model.
//
// All EDUs of the batch are flattened into E rows; the encoder works on
// R = E*K rows, one per (EDU, aspect), laid out row-major by EDU. Word
// sequences are padded to the longest EDU with token id 0 and a 0/1 mask so
// padded positions are excluded from the recurrence carry and from both
// attention levels.
struct BatchPlan {
  struct EduRow {
    int sentence = 0;   // index into the batch
    int edu_index = 0;  // position within its sentence
    std::vector<int> token_ids;
  };

  int n_sentences = 0;
  int n_aspects = 0;
  int max_len = 0;  // longest EDU, in tokens

  std::vector<EduRow> edus;                      // E entries
  std::vector<std::vector<int>> sentence_edus;   // sentence -> indices into edus
  std::vector<std::pair<int, int>> gold_pairs;   // (sentence, aspect id)
  std::vector<int> gold_polarity;                // class per gold pair, empty if unlabeled
  std::vector<double> presence_targets;          // n_sentences*K, 1.0 on gold aspects

  int n_edus() const { return static_cast<int>(edus.size()); }
  int n_rows() const { return n_edus() * n_aspects; }
  int row_of(int edu, int aspect) const { return edu * n_aspects + aspect; }
  int group_of(int sentence, int aspect) const { return sentence * n_aspects + aspect; }

  std::vector<int> step_token_ids(int t) const {
    std::vector<int> ids(edus.size(), 0);
    for (std::size_t e = 0; e < edus.size(); ++e)
      if (t < static_cast<int>(edus[e].token_ids.size())) ids[e] = edus[e].token_ids[static_cast<std::size_t>(t)];
    return ids;
  }

  // 0/1 validity per (EDU, aspect) row at step t.
  std::vector<double> step_mask(int t) const {
    std::vector<double> m(static_cast<std::size_t>(n_rows()), 0.0);
    for (std::size_t e = 0; e < edus.size(); ++e)
      if (t < static_cast<int>(edus[e].token_ids.size()))
        for (int k = 0; k < n_aspects; ++k) m[static_cast<std::size_t>(row_of(static_cast<int>(e), k))] = 1.0;
    return m;
  }

  std::vector<int> row_lengths() const {
    std::vector<int> len(static_cast<std::size_t>(n_rows()), 1);
    for (std::size_t e = 0; e < edus.size(); ++e)
      for (int k = 0; k < n_aspects; ++k)
        len[static_cast<std::size_t>(row_of(static_cast<int>(e), k))] =
            static_cast<int>(edus[e].token_ids.size());
    return len;
  }
};

namespace detail {

inline void add_to_plan(BatchPlan& plan, const LabeledSample& s, int si, const Vocab& vocab, int max_edus) {
  if (static_cast<int>(s.sentence.edus.size()) > max_edus)
    throw ConfigError("sentence has " + std::to_string(s.sentence.edus.size()) + " EDUs, position table holds " +
                      std::to_string(max_edus));
  for (const Edu& e : s.sentence.edus) {
    BatchPlan::EduRow row;
    row.sentence = si;
    row.edu_index = e.index;
    for (const Token& t : e.tokens) row.token_ids.push_back(vocab.id_of(t.text));
    plan.max_len = std::max(plan.max_len, static_cast<int>(row.token_ids.size()));
    plan.sentence_edus[static_cast<std::size_t>(si)].push_back(plan.n_edus());
    plan.edus.push_back(std::move(row));
  }
  for (const auto& [aspect, pol] : s.labels) {
    plan.gold_pairs.emplace_back(si, aspect);
    plan.gold_polarity.push_back(static_cast<int>(pol));
    plan.presence_targets[static_cast<std::size_t>(plan.group_of(si, aspect))] = 1.0;
  }
}

}  // namespace detail

inline BatchPlan make_batch_plan(const std::vector<LabeledSample>& samples, const std::vector<int>& batch,
                                 const Vocab& vocab, int n_aspects, int max_edus) {
  BatchPlan plan;
  plan.n_sentences = static_cast<int>(batch.size());
  plan.n_aspects = n_aspects;
  plan.sentence_edus.resize(batch.size());
  plan.presence_targets.assign(static_cast<std::size_t>(plan.n_sentences * n_aspects), 0.0);
  for (std::size_t si = 0; si < batch.size(); ++si) {
    const LabeledSample& s = samples[static_cast<std::size_t>(batch[si])];
    if (s.labels.empty()) throw DataError("sentence without a gold aspect: \"" + s.sentence.text + "\"");
    detail::add_to_plan(plan, s, static_cast<int>(si), vocab, max_edus);
  }
  return plan;
}

// Variant for prediction/inspection inputs, where sentences may carry gold
// aspects without polarities or no labels at all.
inline BatchPlan make_batch_plan(const std::vector<AnnotatedSentence>& sentences, const std::vector<int>& batch,
                                 const Vocab& vocab, const AspectSet& aspects, int max_edus) {
  BatchPlan plan;
  plan.n_sentences = static_cast<int>(batch.size());
  plan.n_aspects = aspects.size();
  plan.sentence_edus.resize(batch.size());
  plan.presence_targets.assign(static_cast<std::size_t>(plan.n_sentences * aspects.size()), 0.0);
  for (std::size_t si = 0; si < batch.size(); ++si) {
    const AnnotatedSentence& a = sentences[static_cast<std::size_t>(batch[si])];
    LabeledSample s;
    s.sentence = a.sentence;
    for (const AspectLabel& l : a.labels) {
      const int id = aspects.id_of(l.aspect);
      if (id < 0) throw ValidationError("unknown aspect '" + l.aspect + "' in input");
      s.labels.emplace_back(id, l.polarity);
    }
    detail::add_to_plan(plan, s, static_cast<int>(si), vocab, max_edus);
  }
  return plan;
}

}  // namespace edua
