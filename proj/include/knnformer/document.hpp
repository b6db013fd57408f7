#pragma once

#include <string>
#include <vector>

#include "geometry.hpp"

namespace knnf {

inline constexpr int kNoCategory = -1;

struct Entity {
  BBox box;
  std::string text;
  int category = kNoCategory;  // index into the label schema; kNoCategory when unlabeled
};

struct Document {
  std::string id;
  std::string tag;  // template / source marker, used by tag-based splits
  double page_w = 0;
  double page_h = 0;
  bool normalized = false;  // true once boxes live in the unit page
  std::vector<Entity> entities;
};

// Returns a copy whose boxes are scaled into [0,1]^2 (and clamped to the page).
// Idempotent: an already-normalized document is returned unchanged.
inline Document normalize_document(const Document& doc, double page_w, double page_h) {
  if (doc.normalized) return doc;
  if (!(page_w > 0.0) || !(page_h > 0.0))
    throw InvalidInputError("normalize_document: page dimensions must be positive (doc " + doc.id + ")");
  Document out = doc;
  for (auto& e : out.entities) e.box = normalize_bbox(e.box, page_w, page_h);
  out.normalized = true;
  return out;
}

inline SigmaMatrices pairwise_sigma(const Document& doc) {
  if (!doc.normalized)
    throw InvalidInputError("pairwise_sigma: document must be normalized first (doc " + doc.id + ")");
  if (doc.entities.empty())
    throw InvalidInputError("pairwise_sigma: empty document (doc " + doc.id + ")");
  std::vector<BBox> boxes;
  boxes.reserve(doc.entities.size());
  for (const auto& e : doc.entities) boxes.push_back(e.box);
  return pairwise_sigma(boxes);
}

}  // namespace knnf
