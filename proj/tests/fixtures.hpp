#pragma once

// Shared test fixtures: deterministic synthetic corpora, SemEval-schema XML
// generators sized to the published dataset statistics, and small embedding
// files.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "edua/config.hpp"
#include "edua/data.hpp"
#include "edua/model.hpp"
#include "edua/train.hpp"

namespace fixtures {

using namespace edua;

inline std::filesystem::path temp_dir(const std::string& name) {
  std::filesystem::path p = std::filesystem::temp_directory_path() / ("edua_test_" + name);
  std::filesystem::create_directories(p);
  return p;
}

// ---------------------------------------------------------------------------
// Synthetic separable corpus: polarity is fully determined by one adjective
// per (aspect, polarity), so a working model can drive training error to 0.

inline AspectSet synth_aspects() {
  AspectSet a;
  a.names = {"food", "service"};
  a.init_word = {{"food", "food"}, {"service", "service"}};
  return a;
}

inline const char* synth_adjective(int aspect, Polarity p) {
  static const char* words[2][3] = {{"awful", "decent", "tasty"}, {"rude", "fine", "friendly"}};
  return words[aspect][static_cast<int>(p)];
}

inline LabeledSample synth_pair_sample(Polarity food, Polarity service) {
  LabeledSample s;
  std::string text = std::string("the food was ") + synth_adjective(0, food) + " , the service was " +
                     synth_adjective(1, service) + " .";
  s.sentence = heuristic_segment(text);
  s.labels = {{0, food}, {1, service}};
  return s;
}

inline LabeledSample synth_single_sample(int aspect, Polarity p) {
  LabeledSample s;
  std::string text = std::string("the ") + (aspect == 0 ? "food" : "service") + " was " +
                     synth_adjective(aspect, p) + " .";
  s.sentence = heuristic_segment(text);
  s.labels = {{aspect, p}};
  return s;
}

// Mixed corpus cycling through all 9 two-aspect combinations and 6 singles.
inline std::vector<LabeledSample> synthetic_corpus(int n = 32) {
  std::vector<LabeledSample> out;
  for (int i = 0; i < n; ++i) {
    const int pattern = i % 15;
    if (pattern < 9)
      out.push_back(synth_pair_sample(static_cast<Polarity>(pattern / 3), static_cast<Polarity>(pattern % 3)));
    else if (pattern < 12)
      out.push_back(synth_single_sample(0, static_cast<Polarity>(pattern - 9)));
    else
      out.push_back(synth_single_sample(1, static_cast<Polarity>(pattern - 12)));
  }
  return out;
}

// Every sentence has exactly two EDUs and both aspects.
inline std::vector<LabeledSample> synthetic_two_edu_corpus(int n = 32) {
  std::vector<LabeledSample> out;
  for (int i = 0; i < n; ++i) {
    const int pattern = i % 9;
    out.push_back(synth_pair_sample(static_cast<Polarity>(pattern / 3), static_cast<Polarity>(pattern % 3)));
  }
  return out;
}

inline ModelDims small_dims(int n_aspects_unused = 0) {
  ModelDims d;
  d.word_dim = 16;
  d.aspect_dim = 16;
  d.fused_dim = 16;
  d.hidden_dim = 8;
  d.max_edus = 8;
  (void)n_aspects_unused;
  return d;
}

inline Model synth_model(const std::vector<LabeledSample>& corpus, std::uint64_t seed,
                         ModelDims dims = small_dims()) {
  std::mt19937_64 vrng(seed ^ 0xabcdef);
  Vocab vocab = load_glove("", collect_tokens({&corpus}), dims.word_dim, vrng);
  return Model::init(dims, std::move(vocab), synth_aspects(), seed);
}

// ---------------------------------------------------------------------------
// SemEval-schema XML fixtures reproducing the published per-split statistics
// (sentences with single/multiple aspects and label counts per polarity).

struct SplitSpec {
  int single = 0;
  int multiple = 0;
  int neg = 0, neu = 0, pos = 0;
  bool hard = false;        // every multi-aspect sentence mixes polarities
  bool with_conflicts = false;  // sprinkle conflict labels that must be filtered
};

inline AspectSet rest14_aspects() {
  AspectSet a;
  a.names = {"food", "service", "price", "ambience", "anecdotes/miscellaneous"};
  a.init_word = {{"food", "food"},
                 {"service", "service"},
                 {"price", "price"},
                 {"ambience", "ambience"},
                 {"anecdotes/miscellaneous", ""}};
  return a;
}

inline AspectSet mams_aspects() {
  AspectSet a;
  a.names = {"food", "service", "staff", "price", "ambience", "menu", "place", "miscellaneous"};
  for (const std::string& n : a.names) a.init_word[n] = n == "miscellaneous" ? "" : n;
  return a;
}

namespace detail {

inline std::string aspect_word(const std::string& name) {
  if (name == "anecdotes/miscellaneous" || name == "miscellaneous") return "visit";
  return name;
}

inline std::string clause(const std::string& aspect, int polarity) {
  static const char* adj[3] = {"disappointing", "unremarkable", "wonderful"};
  return "the " + aspect_word(aspect) + " was " + adj[polarity];
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct SentenceDraft {
  std::vector<int> aspects;
  std::vector<int> polarities;       // parallel to aspects
  std::vector<int> conflict_aspects; // extra labels that the loader must drop
};

}  // namespace detail

// Deterministically constructs a split hitting the exact sentence and label
// counts. Multi-aspect sentences carry 2 labels, with as many 3-label
// sentences as the totals require. Hard splits guarantee at least two
// distinct polarities per sentence.
inline std::vector<detail::SentenceDraft> plan_split(const SplitSpec& spec, int n_aspects,
                                                     std::uint64_t seed) {
  const int labels = spec.neg + spec.neu + spec.pos;
  const int multi_labels = labels - spec.single;
  if (spec.multiple == 0 && multi_labels != 0) throw std::logic_error("split spec: no room for labels");
  const int triples = spec.multiple > 0 ? multi_labels - 2 * spec.multiple : 0;
  const int doubles = spec.multiple - triples;
  if (triples < 0 || doubles < 0) throw std::logic_error("split spec: infeasible multi counts");

  std::mt19937 rng(static_cast<unsigned>(seed));
  std::vector<detail::SentenceDraft> drafts;

  if (spec.hard) {
    // Triples are (neg, neu, pos); doubles pair distinct polarities with
    // counts solved from the remaining totals.
    const int rn = spec.neg - triples, ru = spec.neu - triples, rp = spec.pos - triples;
    const int nn_nu = (rn + ru - rp) / 2;
    const int nn_np = rn - nn_nu;
    const int nu_np = ru - nn_nu;
    if (nn_nu < 0 || nn_np < 0 || nu_np < 0 || 2 * (nn_nu + nn_np + nu_np) != rn + ru + rp ||
        nn_nu + nn_np + nu_np != doubles)
      throw std::logic_error("split spec: infeasible hard polarity totals");
    std::vector<std::vector<int>> pol_sets;
    for (int i = 0; i < triples; ++i) pol_sets.push_back({0, 1, 2});
    for (int i = 0; i < nn_nu; ++i) pol_sets.push_back({0, 1});
    for (int i = 0; i < nn_np; ++i) pol_sets.push_back({0, 2});
    for (int i = 0; i < nu_np; ++i) pol_sets.push_back({1, 2});
    std::shuffle(pol_sets.begin(), pol_sets.end(), rng);
    for (auto& ps : pol_sets) {
      detail::SentenceDraft d;
      d.polarities = std::move(ps);
      drafts.push_back(std::move(d));
    }
  } else {
    std::vector<int> pool;
    pool.insert(pool.end(), static_cast<std::size_t>(spec.neg), 0);
    pool.insert(pool.end(), static_cast<std::size_t>(spec.neu), 1);
    pool.insert(pool.end(), static_cast<std::size_t>(spec.pos), 2);
    std::shuffle(pool.begin(), pool.end(), rng);
    std::size_t next = 0;
    auto take = [&](int m) {
      std::vector<int> out(pool.begin() + static_cast<long>(next), pool.begin() + static_cast<long>(next + m));
      next += static_cast<std::size_t>(m);
      return out;
    };
    for (int i = 0; i < triples; ++i) drafts.push_back({{}, take(3), {}});
    for (int i = 0; i < doubles; ++i) drafts.push_back({{}, take(2), {}});
    for (int i = 0; i < spec.single; ++i) drafts.push_back({{}, take(1), {}});
    if (next != pool.size()) throw std::logic_error("split spec: polarity pool mismatch");
  }

  // Distinct aspects per sentence, rotating through the inventory.
  for (std::size_t i = 0; i < drafts.size(); ++i)
    for (std::size_t j = 0; j < drafts[i].polarities.size(); ++j)
      drafts[i].aspects.push_back(static_cast<int>((i + j) % static_cast<std::size_t>(n_aspects)));

  if (spec.with_conflicts) {
    // An extra conflict label on the first sentence (the pair is dropped,
    // the sentence stays) and three conflict-only sentences (dropped whole).
    if (!drafts.empty())
      drafts[0].conflict_aspects.push_back((drafts[0].aspects.back() + 1) % n_aspects);
    for (int i = 0; i < 3; ++i) {
      detail::SentenceDraft d;
      d.conflict_aspects.push_back(i % n_aspects);
      drafts.push_back(std::move(d));
    }
  }
  std::shuffle(drafts.begin(), drafts.end(), rng);
  return drafts;
}

inline void write_semeval_xml(const std::filesystem::path& path, const SplitSpec& spec,
                              const AspectSet& aspects, std::uint64_t seed) {
  std::vector<detail::SentenceDraft> drafts = plan_split(spec, aspects.size(), seed);
  std::ofstream out(path);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<sentences>\n";
  int id = 0;
  for (const detail::SentenceDraft& d : drafts) {
    ++id;
    std::string text;
    for (std::size_t i = 0; i < d.aspects.size(); ++i) {
      if (i) text += " , ";
      text += detail::clause(aspects.names[static_cast<std::size_t>(d.aspects[i])], d.polarities[i]);
    }
    for (std::size_t i = 0; i < d.conflict_aspects.size(); ++i) {
      if (!text.empty()) text += " , ";
      text += "the " + detail::aspect_word(aspects.names[static_cast<std::size_t>(d.conflict_aspects[i])]) +
              " was hit and miss here";
    }
    text += id == 1 ? " & that is all ." : " .";  // one entity-escaped sentence per file
    static const char* pol_name[3] = {"negative", "neutral", "positive"};
    out << "  <sentence id=\"" << id << "\">\n    <text>" << detail::xml_escape(text) << "</text>\n"
        << "    <aspectCategories>\n";
    for (std::size_t i = 0; i < d.aspects.size(); ++i)
      out << "      <aspectCategory category=\""
          << detail::xml_escape(aspects.names[static_cast<std::size_t>(d.aspects[i])]) << "\" polarity=\""
          << pol_name[d.polarities[i]] << "\"/>\n";
    for (int a : d.conflict_aspects)
      out << "      <aspectCategory category=\"" << detail::xml_escape(aspects.names[static_cast<std::size_t>(a)])
          << "\" polarity=\"conflict\"/>\n";
    out << "    </aspectCategories>\n  </sentence>\n";
  }
  out << "</sentences>\n";
}

inline SplitSpec rest14_train_spec() { return {2345, 539, 841, 501, 2174, false, true}; }
inline SplitSpec rest14_test_spec() { return {595, 172, 222, 94, 657, false, true}; }
inline SplitSpec mams_train_spec() { return {0, 2839, 1883, 2776, 1742, true, false}; }
inline SplitSpec mams_val_spec() { return {0, 710, 460, 689, 428, true, false}; }
inline SplitSpec mams_test_spec() { return {0, 400, 263, 393, 263, true, false}; }

// ---------------------------------------------------------------------------
// Tiny pretrained-embedding file

inline void write_glove_file(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, std::vector<double>>>& rows) {
  std::ofstream out(path);
  for (const auto& [tok, vals] : rows) {
    out << tok;
    for (double v : vals) out << ' ' << v;
    out << '\n';
  }
}

}  // namespace fixtures
