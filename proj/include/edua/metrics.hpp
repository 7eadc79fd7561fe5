#pragma once

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edua/errors.hpp"
#include "edua/segment.hpp"

namespace edua {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int gold = 0;
  int predicted = 0;
  int correct = 0;
};

struct EvalReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::array<ClassMetrics, 3> per_class;          // negative, neutral, positive
  std::array<std::array<int, 3>, 3> confusion{};  // [gold][predicted]
  int pairs = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["accuracy"] = accuracy;
    j["macro_f1"] = macro_f1;
    j["pairs"] = pairs;
    for (int c = 0; c < 3; ++c) {
      const char* name = polarity_name(static_cast<Polarity>(c));
      j["per_class"][name] = {{"precision", per_class[static_cast<std::size_t>(c)].precision},
                              {"recall", per_class[static_cast<std::size_t>(c)].recall},
                              {"f1", per_class[static_cast<std::size_t>(c)].f1},
                              {"gold", per_class[static_cast<std::size_t>(c)].gold},
                              {"predicted", per_class[static_cast<std::size_t>(c)].predicted}};
    }
    j["confusion"] = confusion;
    return j;
  }
};

// Accuracy and macro-F1 over (gold, predicted) class pairs. A class with
// neither gold nor predicted examples contributes F1 = 0 to the macro
// average; hard-sentence test subsets can lack a class entirely, so the
// convention matters.
inline EvalReport compute_metrics(const std::vector<std::pair<int, int>>& gold_pred) {
  if (gold_pred.empty()) throw InputError("no (gold, predicted) pairs to score");
  EvalReport r;
  r.pairs = static_cast<int>(gold_pred.size());
  int correct = 0;
  for (const auto& [gold, pred] : gold_pred) {
    if (gold < 0 || gold > 2 || pred < 0 || pred > 2) throw InputError("class index out of range");
    r.confusion[static_cast<std::size_t>(gold)][static_cast<std::size_t>(pred)] += 1;
    if (gold == pred) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / r.pairs;

  double f1_sum = 0.0;
  for (int c = 0; c < 3; ++c) {
    ClassMetrics& m = r.per_class[static_cast<std::size_t>(c)];
    for (int o = 0; o < 3; ++o) {
      m.gold += r.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(o)];
      m.predicted += r.confusion[static_cast<std::size_t>(o)][static_cast<std::size_t>(c)];
    }
    m.correct = r.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
    m.precision = m.predicted > 0 ? static_cast<double>(m.correct) / m.predicted : 0.0;
    m.recall = m.gold > 0 ? static_cast<double>(m.correct) / m.gold : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    f1_sum += m.f1;
  }
  r.macro_f1 = f1_sum / 3.0;
  return r;
}

}  // namespace edua
