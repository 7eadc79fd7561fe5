#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "edua/errors.hpp"

namespace edua {

// A token with its character span in the source text (end-exclusive).
struct Token {
  std::string text;  // lowercased
  int begin = 0;
  int end = 0;
};

// Elementary discourse unit: a clause-like span of consecutive tokens.
struct Edu {
  std::vector<Token> tokens;
  int begin = 0;  // char offsets into the sentence text
  int end = 0;
  int index = 0;  // position among the sentence's EDUs

  std::string joined() const {
    std::string s;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) s += ' ';
      s += tokens[i].text;
    }
    return s;
  }
};

struct SegmentedSentence {
  enum class Source { presegmented, heuristic };

  std::string text;
  std::vector<Edu> edus;
  Source source = Source::heuristic;
};

// Lowercase tokenizer that splits on whitespace and punctuation, keeping
// each punctuation character as its own token. Matches the convention of
// whitespace-delimited pretrained embedding vocabularies.
inline std::vector<Token> tokenize(std::string_view text, int offset = 0) {
  std::vector<Token> out;
  const int n = static_cast<int>(text.size());
  int i = 0;
  auto is_word = [](unsigned char c) { return std::isalnum(c) != 0; };
  while (i < n) {
    const unsigned char c = static_cast<unsigned char>(text[static_cast<std::size_t>(i)]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (is_word(c)) {
      int j = i;
      while (j < n && is_word(static_cast<unsigned char>(text[static_cast<std::size_t>(j)]))) ++j;
      std::string tok(text.substr(static_cast<std::size_t>(i), static_cast<std::size_t>(j - i)));
      std::transform(tok.begin(), tok.end(), tok.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
      out.push_back(Token{std::move(tok), offset + i, offset + j});
      i = j;
    } else {
      out.push_back(Token{std::string(1, static_cast<char>(c)), offset + i, offset + i + 1});
      ++i;
    }
  }
  return out;
}

namespace detail {

constexpr std::array<std::string_view, 4> kConjunctions = {"but", "and", "although", "or"};

inline bool is_conjunction(const std::string& tok) {
  for (std::string_view c : kConjunctions)
    if (tok == c) return true;
  return false;
}

inline Edu make_edu(std::vector<Token> toks) {
  Edu e;
  e.begin = toks.front().begin;
  e.end = toks.back().end;
  e.tokens = std::move(toks);
  return e;
}

}  // namespace detail

// Split an EDU before conjunction words (but/and/although/or). A split
// requires at least one token before the conjunction and at least three
// tokens after it; the conjunction opens the right-hand EDU. Scanning
// continues inside the right-hand piece, so chained conjunctions split
// repeatedly. EDU indices are left for the caller to renumber.
inline std::vector<Edu> split_on_conjunctions(const Edu& edu) {
  std::vector<Edu> out;
  std::vector<Token> current;
  const int n = static_cast<int>(edu.tokens.size());
  for (int i = 0; i < n; ++i) {
    const Token& tok = edu.tokens[static_cast<std::size_t>(i)];
    if (!current.empty() && detail::is_conjunction(tok.text) && n - i - 1 >= 3) {
      out.push_back(detail::make_edu(std::move(current)));
      current.clear();
    }
    current.push_back(tok);
  }
  if (!current.empty()) out.push_back(detail::make_edu(std::move(current)));
  return out;
}

namespace detail {

inline std::vector<Edu> split_on_punctuation(const Edu& edu) {
  std::vector<Edu> out;
  std::vector<Token> current;
  const int n = static_cast<int>(edu.tokens.size());
  for (int i = 0; i < n; ++i) {
    const Token& tok = edu.tokens[static_cast<std::size_t>(i)];
    current.push_back(tok);
    const bool is_delim = tok.text == "," || tok.text == ";";
    // Delimiter stays with the left piece; both sides need >= 2 tokens
    // around it.
    if (is_delim && static_cast<int>(current.size()) - 1 >= 2 && n - i - 1 >= 2) {
      out.push_back(make_edu(std::move(current)));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(make_edu(std::move(current)));
  return out;
}

inline void renumber(std::vector<Edu>& edus) {
  for (std::size_t i = 0; i < edus.size(); ++i) edus[i].index = static_cast<int>(i);
}

}  // namespace detail

// Fallback segmenter for raw text: tokenize, split at commas/semicolons,
// then apply the conjunction rule to every piece.
inline SegmentedSentence heuristic_segment(const std::string& text) {
  std::vector<Token> toks = tokenize(text);
  if (toks.empty()) throw InputError("cannot segment empty or whitespace-only text");

  Edu whole = detail::make_edu(std::move(toks));
  std::vector<Edu> pieces = detail::split_on_punctuation(whole);

  SegmentedSentence out;
  out.text = text;
  out.source = SegmentedSentence::Source::heuristic;
  for (const Edu& p : pieces)
    for (Edu& e : split_on_conjunctions(p)) out.edus.push_back(std::move(e));
  detail::renumber(out.edus);
  return out;
}

namespace detail {

inline void validate_spans(const SegmentedSentence& s, const std::string& where) {
  if (s.edus.empty()) throw ValidationError(where + ": sentence has no EDUs");
  int prev_end = 0;
  for (const Edu& e : s.edus) {
    if (e.tokens.empty()) throw ValidationError(where + ": empty EDU");
    if (e.begin < prev_end) throw ValidationError(where + ": EDU spans overlap or are out of order");
    // Gaps between spans may contain whitespace only.
    for (int i = prev_end; i < e.begin; ++i) {
      if (!std::isspace(static_cast<unsigned char>(s.text[static_cast<std::size_t>(i)])))
        throw ValidationError(where + ": EDU spans leave non-whitespace text uncovered");
    }
    if (e.end > static_cast<int>(s.text.size())) throw ValidationError(where + ": EDU span exceeds text");
    prev_end = e.end;
  }
  for (int i = prev_end; i < static_cast<int>(s.text.size()); ++i) {
    if (!std::isspace(static_cast<unsigned char>(s.text[static_cast<std::size_t>(i)])))
      throw ValidationError(where + ": trailing non-whitespace text uncovered");
  }
}

}  // namespace detail

// Build a sentence from externally supplied EDU char spans, then run the
// conjunction post-split on every provided EDU.
inline SegmentedSentence segment_from_spans(const std::string& text,
                                            const std::vector<std::pair<int, int>>& spans,
                                            const std::string& where = "presegmented input") {
  if (spans.empty()) throw ValidationError(where + ": no EDU spans");
  SegmentedSentence out;
  out.text = text;
  out.source = SegmentedSentence::Source::presegmented;
  for (const auto& [begin, end] : spans) {
    if (begin < 0 || end > static_cast<int>(text.size()) || begin >= end)
      throw ValidationError(where + ": bad EDU span [" + std::to_string(begin) + "," + std::to_string(end) + ")");
    std::vector<Token> toks =
        tokenize(std::string_view(text).substr(static_cast<std::size_t>(begin), static_cast<std::size_t>(end - begin)), begin);
    if (toks.empty()) throw ValidationError(where + ": EDU span contains no tokens");
    for (Edu& e : split_on_conjunctions(detail::make_edu(std::move(toks)))) out.edus.push_back(std::move(e));
  }
  detail::renumber(out.edus);
  detail::validate_spans(out, where);
  return out;
}

// Polarity labels attached to sentences in data files.
enum class Polarity { negative = 0, neutral = 1, positive = 2 };

inline const char* polarity_name(Polarity p) {
  switch (p) {
    case Polarity::negative: return "negative";
    case Polarity::neutral: return "neutral";
    case Polarity::positive: return "positive";
  }
  return "?";
}

inline Polarity polarity_from(const std::string& s, const std::string& where) {
  if (s == "negative") return Polarity::negative;
  if (s == "neutral") return Polarity::neutral;
  if (s == "positive") return Polarity::positive;
  throw ValidationError(where + ": unknown polarity '" + s + "'");
}

struct AspectLabel {
  std::string aspect;
  Polarity polarity = Polarity::neutral;
};

struct AnnotatedSentence {
  SegmentedSentence sentence;
  std::vector<AspectLabel> labels;  // may be empty on unlabeled input
};

// JSONL schema: one object per line,
//   {"text": str, "edus": [[start,end],...],
//    "labels": [{"aspect": str, "polarity": "negative"|"neutral"|"positive"},...]}
// with character offsets into "text", end-exclusive. "labels" is optional.
inline nlohmann::json to_jsonl(const AnnotatedSentence& s) {
  nlohmann::json j;
  j["text"] = s.sentence.text;
  nlohmann::json spans = nlohmann::json::array();
  for (const Edu& e : s.sentence.edus) spans.push_back({e.begin, e.end});
  j["edus"] = std::move(spans);
  if (!s.labels.empty()) {
    nlohmann::json labels = nlohmann::json::array();
    for (const AspectLabel& l : s.labels)
      labels.push_back({{"aspect", l.aspect}, {"polarity", polarity_name(l.polarity)}});
    j["labels"] = std::move(labels);
  }
  return j;
}

inline AnnotatedSentence parse_jsonl_line(const std::string& line, int line_no) {
  const std::string where = "line " + std::to_string(line_no);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  if (!j.contains("text") || !j["text"].is_string()) throw ParseError(where + ": missing \"text\"");
  if (!j.contains("edus") || !j["edus"].is_array()) throw ParseError(where + ": missing \"edus\"");
  const std::string text = j["text"].get<std::string>();
  std::vector<std::pair<int, int>> spans;
  for (const auto& sp : j["edus"]) {
    if (!sp.is_array() || sp.size() != 2) throw ParseError(where + ": EDU span must be [start,end]");
    spans.emplace_back(sp[0].get<int>(), sp[1].get<int>());
  }
  AnnotatedSentence out;
  out.sentence = segment_from_spans(text, spans, where);
  if (j.contains("labels")) {
    for (const auto& l : j["labels"]) {
      if (!l.contains("aspect")) throw ParseError(where + ": label object without \"aspect\"");
      // Polarity is optional so prediction inputs can name gold aspects only.
      const Polarity pol =
          l.contains("polarity") ? polarity_from(l["polarity"].get<std::string>(), where) : Polarity::neutral;
      out.labels.push_back(AspectLabel{l["aspect"].get<std::string>(), pol});
    }
  }
  return out;
}

inline std::vector<AnnotatedSentence> load_presegmented(std::istream& in) {
  std::vector<AnnotatedSentence> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_jsonl_line(line, line_no));
  }
  return out;
}

inline std::vector<AnnotatedSentence> load_presegmented(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return load_presegmented(in);
}

}  // namespace edua
