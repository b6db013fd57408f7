#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "core.hpp"

namespace knnf {

// Axis-aligned box in page coordinates, y growing downward (image convention).
struct BBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool well_formed() const { return x1 >= x0 && y1 >= y0; }
};

// Relative spatial features of an ordered entity pair.
struct SigmaFeatures {
  double dist = 0;   // Euclidean centroid distance, normalized by the unit-page diagonal
  double angle = 0;  // atan2(dy, dx) in (-pi, pi]; 0 for self pairs and coincident centroids
};

struct SigmaMatrices {
  Grid<double> dist;
  Grid<double> angle;
};

inline std::pair<double, double> centroid(const BBox& b) {
  return {0.5 * (b.x0 + b.x1), 0.5 * (b.y0 + b.y1)};
}

// (width, height); inputs to the learned size embedding.
inline std::pair<double, double> size_features(const BBox& b) {
  return {b.x1 - b.x0, b.y1 - b.y0};
}

// Wrap into (-pi, pi].
inline double wrap_angle(double a) {
  while (a <= -kPi) a += 2.0 * kPi;
  while (a > kPi) a -= 2.0 * kPi;
  return a;
}

inline BBox clamp_to_unit_page(const BBox& b) {
  auto clamp01 = [](double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); };
  return BBox{clamp01(b.x0), clamp01(b.y0), clamp01(b.x1), clamp01(b.y1)};
}

// Scale a pixel-space box into the unit page. Boxes reaching outside the page
// are clamped to its border rather than rejected; OCR output does that a lot.
inline BBox normalize_bbox(const BBox& b, double page_w, double page_h) {
  if (!(page_w > 0.0) || !(page_h > 0.0))
    throw InvalidInputError("normalize_bbox: page dimensions must be positive");
  if (!b.well_formed()) throw InvalidInputError("normalize_bbox: malformed box");
  return clamp_to_unit_page(BBox{b.x0 / page_w, b.y0 / page_h, b.x1 / page_w, b.y1 / page_h});
}

inline SigmaFeatures sigma_between(double cxi, double cyi, double cxj, double cyj) {
  const double dx = cxj - cxi;
  const double dy = cyj - cyi;
  const double d = std::sqrt(dx * dx + dy * dy);
  SigmaFeatures s;
  s.dist = d / std::sqrt(2.0);  // unit-page diagonal
  s.angle = (d == 0.0) ? 0.0 : std::atan2(dy, dx);
  return s;
}

// Pairwise sigma over normalized boxes. dist(i,i) == 0 and angle(i,i) == 0 exactly.
inline SigmaMatrices pairwise_sigma(const std::vector<BBox>& boxes) {
  const int n = static_cast<int>(boxes.size());
  if (n < 1) throw InvalidInputError("pairwise_sigma: need at least one box");
  SigmaMatrices out{Grid<double>(n, n, 0.0), Grid<double>(n, n, 0.0)};
  std::vector<double> cx(n), cy(n);
  for (int i = 0; i < n; ++i) {
    auto c = centroid(boxes[i]);
    cx[i] = c.first;
    cy[i] = c.second;
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;  // leave exact zeros on the diagonal
      SigmaFeatures s = sigma_between(cx[i], cy[i], cx[j], cy[j]);
      out.dist(i, j) = s.dist;
      out.angle(i, j) = s.angle;
    }
  }
  return out;
}

}  // namespace knnf
