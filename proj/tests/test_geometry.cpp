#include <catch_amalgamated.hpp>

#include <cmath>

#include <knnformer/geometry.hpp>
#include <knnformer/document.hpp>

#include "oracles.hpp"

using namespace knnf;

TEST_CASE("centroid and size features") {
  const BBox b{0.2, 0.4, 0.6, 0.8};
  const auto c = centroid(b);
  CHECK(c.first == Catch::Approx(0.4));
  CHECK(c.second == Catch::Approx(0.6));
  const auto s = size_features(b);
  CHECK(s.first == Catch::Approx(0.4));
  CHECK(s.second == Catch::Approx(0.4));
}

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(kPi) == Catch::Approx(kPi));
  CHECK(wrap_angle(-kPi) == Catch::Approx(kPi));
  CHECK(wrap_angle(3.0 * kPi / 2.0) == Catch::Approx(-kPi / 2.0));
  CHECK(wrap_angle(2.0 * kPi) == Catch::Approx(0.0).margin(1e-15));
  CHECK(wrap_angle(-7.0 * kPi) == Catch::Approx(kPi));
  for (double a = -20.0; a <= 20.0; a += 0.37) {
    const double w = wrap_angle(a);
    CHECK(w > -kPi - 1e-12);
    CHECK(w <= kPi + 1e-12);
    CHECK(std::abs(std::sin(w) - std::sin(a)) < 1e-9);
    CHECK(std::abs(std::cos(w) - std::cos(a)) < 1e-9);
  }
}

TEST_CASE("normalize_bbox scales into the unit page") {
  const BBox b = normalize_bbox(BBox{200, 120, 400, 360}, 800, 600);
  CHECK(b.x0 == Catch::Approx(0.25));
  CHECK(b.y0 == Catch::Approx(0.2));
  CHECK(b.x1 == Catch::Approx(0.5));
  CHECK(b.y1 == Catch::Approx(0.6));
}

TEST_CASE("normalize_bbox clamps boxes that poke outside the page") {
  const BBox b = normalize_bbox(BBox{-10, -5, 900, 700}, 800, 600);
  CHECK(b.x0 == 0.0);
  CHECK(b.y0 == 0.0);
  CHECK(b.x1 == 1.0);
  CHECK(b.y1 == 1.0);
}

TEST_CASE("normalize_bbox rejects bad input") {
  CHECK_THROWS_AS(normalize_bbox(BBox{0, 0, 1, 1}, 0.0, 600), InvalidInputError);
  CHECK_THROWS_AS(normalize_bbox(BBox{0, 0, 1, 1}, 800, -1.0), InvalidInputError);
  CHECK_THROWS_AS(normalize_bbox(BBox{5, 0, 1, 1}, 800, 600), InvalidInputError);  // x1 < x0
}

TEST_CASE("sigma_between distance is normalized by the page diagonal") {
  const SigmaFeatures s = sigma_between(0.1, 0.1, 0.4, 0.5);
  CHECK(s.dist == Catch::Approx(0.5 / std::sqrt(2.0)));
  CHECK(s.angle == Catch::Approx(std::atan2(0.4, 0.3)));
}

TEST_CASE("sigma_between angle follows image conventions") {
  CHECK(sigma_between(0, 0, 1, 0).angle == Catch::Approx(0.0));          // to the right
  CHECK(sigma_between(0, 0, 0, 1).angle == Catch::Approx(kPi / 2));      // below (y grows down)
  CHECK(sigma_between(0, 0, -1, 0).angle == Catch::Approx(kPi));         // to the left
  CHECK(sigma_between(0, 0, 0, -1).angle == Catch::Approx(-kPi / 2));    // above
  CHECK(sigma_between(0.3, 0.3, 0.3, 0.3).dist == 0.0);                  // coincident
  CHECK(sigma_between(0.3, 0.3, 0.3, 0.3).angle == 0.0);
}

TEST_CASE("pairwise_sigma has exact zeros on the diagonal and symmetric distances") {
  Rng rng(11);
  std::vector<BBox> boxes;
  for (int i = 0; i < 12; ++i) {
    const double x = rng.uniform(0.0, 0.9), y = rng.uniform(0.0, 0.9);
    boxes.push_back(BBox{x, y, x + 0.05, y + 0.03});
  }
  const SigmaMatrices m = pairwise_sigma(boxes);
  REQUIRE(m.dist.rows() == 12);
  REQUIRE(m.angle.cols() == 12);
  for (int i = 0; i < 12; ++i) {
    CHECK(m.dist(i, i) == 0.0);
    CHECK(m.angle(i, i) == 0.0);
    for (int j = 0; j < 12; ++j) {
      CHECK(m.dist(i, j) == Catch::Approx(m.dist(j, i)));
      if (i != j) {
        // The reverse direction points the opposite way.
        CHECK(wrap_angle(m.angle(i, j) + kPi) == Catch::Approx(m.angle(j, i)).margin(1e-12));
        CHECK(m.dist(i, j) > 0.0);
      }
    }
  }
}

TEST_CASE("pairwise_sigma rejects an empty box list") {
  CHECK_THROWS_AS(pairwise_sigma(std::vector<BBox>{}), InvalidInputError);
}

TEST_CASE("normalize_document is idempotent") {
  Document doc;
  doc.id = "d";
  doc.page_w = 800;
  doc.page_h = 600;
  Entity e;
  e.box = BBox{100, 60, 300, 120};
  e.text = "x";
  doc.entities.push_back(e);

  const Document once = normalize_document(doc, doc.page_w, doc.page_h);
  REQUIRE(once.normalized);
  CHECK(once.entities[0].box.x0 == Catch::Approx(0.125));
  CHECK(once.entities[0].box.y1 == Catch::Approx(0.2));
  const Document twice = normalize_document(once, once.page_w, once.page_h);
  CHECK(twice.entities[0].box.x0 == once.entities[0].box.x0);
  CHECK(twice.entities[0].box.x1 == once.entities[0].box.x1);
}
