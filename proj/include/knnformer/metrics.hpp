#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "matching.hpp"

namespace knnf {

struct CategoryScore {
  std::string name;
  bool unique = false;
  long long tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  long long support() const { return tp + fn; }
};

struct F1Report {
  std::vector<CategoryScore> per_category;  // schema order
  double macro_f1 = 0.0;  // mean F1 over unique categories that appear in gold
  long long total = 0;
  long long correct = 0;
  double accuracy = 0.0;
};

// Corpus-level scores from flattened per-entity gold/pred labels. The
// headline number averages F1 across unique categories with nonzero support;
// free-form categories and absent fields do not dilute it.
inline F1Report entity_f1(const std::vector<int>& gold, const std::vector<int>& pred,
                          const LabelSchema& schema) {
  if (gold.size() != pred.size()) throw InvalidInputError("entity_f1: gold/pred length mismatch");
  F1Report rep;
  rep.per_category.resize(static_cast<size_t>(schema.size()));
  for (int c = 0; c < schema.size(); ++c) {
    rep.per_category[static_cast<size_t>(c)].name = schema.categories[static_cast<size_t>(c)].name;
    rep.per_category[static_cast<size_t>(c)].unique = schema.categories[static_cast<size_t>(c)].unique;
  }
  for (size_t i = 0; i < gold.size(); ++i) {
    const int g = gold[i], p = pred[i];
    if (g < 0) continue;  // unlabeled entities are not scored
    if (g >= schema.size() || p < 0 || p >= schema.size())
      throw InvalidInputError("entity_f1: label out of schema range");
    rep.total += 1;
    if (g == p) {
      rep.correct += 1;
      rep.per_category[static_cast<size_t>(g)].tp += 1;
    } else {
      rep.per_category[static_cast<size_t>(g)].fn += 1;
      rep.per_category[static_cast<size_t>(p)].fp += 1;
    }
  }
  double f1_sum = 0.0;
  int f1_count = 0;
  for (auto& cs : rep.per_category) {
    cs.precision = (cs.tp + cs.fp) > 0 ? static_cast<double>(cs.tp) / static_cast<double>(cs.tp + cs.fp) : 0.0;
    cs.recall = (cs.tp + cs.fn) > 0 ? static_cast<double>(cs.tp) / static_cast<double>(cs.tp + cs.fn) : 0.0;
    cs.f1 = (cs.precision + cs.recall) > 0.0 ? 2.0 * cs.precision * cs.recall / (cs.precision + cs.recall) : 0.0;
    if (cs.unique && cs.support() > 0) {
      f1_sum += cs.f1;
      f1_count += 1;
    }
  }
  rep.macro_f1 = f1_count > 0 ? f1_sum / f1_count : 0.0;
  rep.accuracy = rep.total > 0 ? static_cast<double>(rep.correct) / static_cast<double>(rep.total) : 0.0;
  return rep;
}

inline nlohmann::json to_json(const F1Report& rep) {
  nlohmann::json per;
  for (const auto& cs : rep.per_category) {
    per[cs.name] = {
        {"precision", cs.precision}, {"recall", cs.recall}, {"f1", cs.f1},
        {"support", cs.support()},   {"unique", cs.unique},
    };
  }
  return nlohmann::json{
      {"macro_f1", rep.macro_f1}, {"accuracy", rep.accuracy}, {"entities", rep.total},
      {"correct", rep.correct},   {"per_category", per},
  };
}

}  // namespace knnf
