#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "tensor.hpp"

namespace knnf {

// ---------------------------------------------------------------------------
// Label schema: which categories exist and which may appear at most once.
// ---------------------------------------------------------------------------

struct Category {
  std::string name;
  bool unique = false;
};

struct LabelSchema {
  std::vector<Category> categories;

  int size() const { return static_cast<int>(categories.size()); }

  int index_of(const std::string& name) const {
    for (int i = 0; i < size(); ++i)
      if (categories[static_cast<size_t>(i)].name == name) return i;
    return -1;
  }

  std::vector<int> unique_indices() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (categories[static_cast<size_t>(i)].unique) out.push_back(i);
    return out;
  }

  std::vector<int> non_unique_indices() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (!categories[static_cast<size_t>(i)].unique) out.push_back(i);
    return out;
  }

  // Category used to pad assignment columns; "others" when present, else the
  // first non-unique category.
  int pad_category() const {
    const int o = index_of("others");
    if (o >= 0 && !categories[static_cast<size_t>(o)].unique) return o;
    for (int i = 0; i < size(); ++i)
      if (!categories[static_cast<size_t>(i)].unique) return i;
    throw ConfigError("LabelSchema: no non-unique category available for padding");
  }

  void validate() const {
    if (categories.empty()) throw ConfigError("LabelSchema: empty schema");
    for (size_t i = 0; i < categories.size(); ++i) {
      if (categories[i].name.empty()) throw ConfigError("LabelSchema: empty category name");
      for (size_t j = i + 1; j < categories.size(); ++j)
        if (categories[i].name == categories[j].name)
          throw ConfigError("LabelSchema: duplicate category name " + categories[i].name);
    }
  }
};

// Person-identity document fields: six singleton value fields plus the two
// free-form classes every remaining token falls into.
inline LabelSchema default_poi_schema() {
  LabelSchema s;
  s.categories = {
      {"last_name", true},      {"first_name", true},     {"date_of_birth", true},
      {"date_of_issue", true},  {"date_of_expiry", true}, {"id_number", true},
      {"key", false},           {"others", false},
  };
  return s;
}

inline nlohmann::json schema_to_json(const LabelSchema& schema) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : schema.categories) arr.push_back({{"name", c.name}, {"unique", c.unique}});
  return arr;
}

inline LabelSchema schema_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) throw ParseError("schema: expected a JSON array of categories");
  LabelSchema s;
  for (const auto& item : arr) {
    if (!item.is_object() || !item.contains("name") || !item.contains("unique"))
      throw ParseError("schema: each category needs \"name\" and \"unique\"");
    try {
      s.categories.push_back({item["name"].get<std::string>(), item["unique"].get<bool>()});
    } catch (const nlohmann::json::exception&) {
      throw ParseError("schema: bad category entry");
    }
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Minimum-cost perfect matching (Jonker-style shortest augmenting paths with
// potentials, O(n^3)). Deterministic: rows are inserted in index order and
// strict improvement is required to change a tentative column.
// ---------------------------------------------------------------------------

inline std::vector<int> hungarian(const Grid<double>& cost) {
  const int n = cost.rows();
  if (n < 1 || cost.cols() != n) throw InvalidInputError("hungarian: cost matrix must be square and nonempty");
  for (const double c : cost.cells())
    if (!std::isfinite(c)) throw InvalidInputError("hungarian: cost matrix must be finite");

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<size_t>(n) + 1, 0), way(static_cast<size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<size_t>(n) + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = p[static_cast<size_t>(j0)];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
    if (p[static_cast<size_t>(j)] > 0) row_to_col[static_cast<size_t>(p[static_cast<size_t>(j)]) - 1] = j - 1;
  return row_to_col;
}

// ---------------------------------------------------------------------------
// Set assignment between entities and gold labels.
// ---------------------------------------------------------------------------

// One column per gold label occurrence, padded with the schema's pad
// category up to N columns; cost is negated probability of the column's class.
struct PaddedCost {
  Grid<double> cost;           // N x N
  std::vector<int> col_class;  // category index backing each column
};

inline PaddedCost build_padded_cost(const Grid<double>& probs, const std::vector<int>& gold,
                                    const LabelSchema& schema) {
  const int n = probs.rows();
  if (n < 1) throw InvalidInputError("build_padded_cost: no entities");
  if (probs.cols() != schema.size()) throw InvalidShapeError("build_padded_cost: probs width != schema size");
  if (static_cast<int>(gold.size()) > n)
    throw InfeasibleError("build_padded_cost: more gold labels than entities");

  std::vector<int> seen(static_cast<size_t>(schema.size()), 0);
  for (const int g : gold) {
    if (g < 0 || g >= schema.size()) throw InvalidGoldError("build_padded_cost: gold label out of range");
    if (schema.categories[static_cast<size_t>(g)].unique && ++seen[static_cast<size_t>(g)] > 1)
      throw InvalidGoldError("build_padded_cost: duplicate gold for unique category " +
                             schema.categories[static_cast<size_t>(g)].name);
  }

  PaddedCost out;
  out.col_class = gold;
  out.col_class.resize(static_cast<size_t>(n), schema.pad_category());
  out.cost = Grid<double>(n, n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < n; ++c) out.cost(i, c) = -probs(i, out.col_class[static_cast<size_t>(c)]);
  return out;
}

enum class LossMode { kPerEntityCe, kMatchedCe };

// Training loss over one document's logits. Per-entity mode is plain mean
// cross-entropy against each row's own label. Matched mode first assigns
// entities to gold labels (Hungarian on current probabilities, held out of
// the gradient) and scores each row against its assigned label instead.
inline Tensor set_loss(const Tensor& logits, const std::vector<int>& gold, const LabelSchema& schema,
                       LossMode mode) {
  if (static_cast<int>(gold.size()) != logits->value.rows())
    throw InvalidShapeError("set_loss: one gold label per entity required");
  if (mode == LossMode::kPerEntityCe) return cross_entropy(logits, gold);

  std::vector<int> present;
  for (const int g : gold)
    if (g >= 0) present.push_back(g);
  if (present.empty()) throw InvalidGoldError("set_loss: no labeled entities");
  const Grid<double> probs = softmax_rows(logits->value);
  const PaddedCost pc = build_padded_cost(probs, present, schema);
  const std::vector<int> asg = hungarian(pc.cost);
  std::vector<int> targets(gold.size(), -1);
  for (size_t i = 0; i < targets.size(); ++i) targets[i] = pc.col_class[static_cast<size_t>(asg[i])];
  return cross_entropy(logits, targets);
}

// ---------------------------------------------------------------------------
// Decoding.
// ---------------------------------------------------------------------------

inline std::vector<int> decode_argmax(const Grid<double>& probs) {
  std::vector<int> out(static_cast<size_t>(probs.rows()), 0);
  for (int i = 0; i < probs.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < probs.cols(); ++j)
      if (probs(i, j) > probs(i, best)) best = j;
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

// One-to-one decoding: every unique category is claimed by exactly one
// entity; remaining entities take their best non-unique category. Guarantees
// zero duplicate predictions among unique categories.
inline std::vector<int> decode_one_to_one(const Grid<double>& probs, const LabelSchema& schema) {
  const int n = probs.rows();
  if (n < 1) throw InvalidInputError("decode_one_to_one: no entities");
  if (probs.cols() != schema.size()) throw InvalidShapeError("decode_one_to_one: probs width != schema size");
  const std::vector<int> uniq = schema.unique_indices();
  const std::vector<int> free = schema.non_unique_indices();
  const int u = static_cast<int>(uniq.size());
  if (n < u)
    throw InfeasibleError("decode_one_to_one: fewer entities (" + std::to_string(n) +
                          ") than unique categories (" + std::to_string(u) + ")");
  if (n > u && free.empty())
    throw InfeasibleError("decode_one_to_one: no non-unique category for surplus entities");

  auto best_free = [&](int row) {
    int best = free[0];
    for (const int c : free)
      if (probs(row, c) > probs(row, best)) best = c;
    return best;
  };

  Grid<double> cost(n, n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < u; ++c) cost(i, c) = -probs(i, uniq[static_cast<size_t>(c)]);
    if (n > u) {
      const double freebie = -probs(i, best_free(i));
      for (int c = u; c < n; ++c) cost(i, c) = freebie;
    }
  }
  const std::vector<int> asg = hungarian(cost);
  std::vector<int> out(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const int c = asg[static_cast<size_t>(i)];
    out[static_cast<size_t>(i)] = (c < u) ? uniq[static_cast<size_t>(c)] : best_free(i);
  }
  return out;
}

}  // namespace knnf
