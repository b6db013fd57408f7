#include <catch_amalgamated.hpp>

#include <knnformer/document.hpp>
#include <knnformer/metrics.hpp>

using namespace knnf;

namespace {

// Schema-index shorthand for the default categories.
constexpr int kLast = 0, kFirst = 1, kDob = 2, kKey = 6, kOthers = 7;

}  // namespace

TEST_CASE("entity_f1 on a worked example") {
  const LabelSchema s = default_poi_schema();
  // gold:  last, first, dob, key, key, others
  // pred:  last, dob,   dob, key, others, others
  const std::vector<int> gold{kLast, kFirst, kDob, kKey, kKey, kOthers};
  const std::vector<int> pred{kLast, kDob, kDob, kKey, kOthers, kOthers};
  const F1Report rep = entity_f1(gold, pred, s);

  CHECK(rep.total == 6);
  CHECK(rep.correct == 4);
  CHECK(rep.accuracy == Catch::Approx(4.0 / 6.0));

  const CategoryScore& last = rep.per_category[kLast];
  CHECK(last.tp == 1);
  CHECK(last.fp == 0);
  CHECK(last.fn == 0);
  CHECK(last.f1 == Catch::Approx(1.0));

  const CategoryScore& first = rep.per_category[kFirst];
  CHECK(first.tp == 0);
  CHECK(first.fn == 1);
  CHECK(first.f1 == 0.0);

  const CategoryScore& dob = rep.per_category[kDob];
  CHECK(dob.tp == 1);
  CHECK(dob.fp == 1);  // the first_name entity was mislabeled dob
  CHECK(dob.fn == 0);
  CHECK(dob.precision == Catch::Approx(0.5));
  CHECK(dob.recall == Catch::Approx(1.0));
  CHECK(dob.f1 == Catch::Approx(2.0 / 3.0));

  // Macro averages the unique categories with support: last, first, dob.
  CHECK(rep.macro_f1 == Catch::Approx((1.0 + 0.0 + 2.0 / 3.0) / 3.0));

  // Non-unique scores are still reported per category.
  const CategoryScore& key = rep.per_category[kKey];
  CHECK(key.tp == 1);
  CHECK(key.fn == 1);
}

TEST_CASE("unlabeled gold entities are skipped entirely") {
  const LabelSchema s = default_poi_schema();
  const F1Report rep = entity_f1({kNoCategory, kLast}, {kOthers, kLast}, s);
  CHECK(rep.total == 1);
  CHECK(rep.correct == 1);
  CHECK(rep.accuracy == 1.0);
  CHECK(rep.per_category[kOthers].fp == 0);  // prediction on unlabeled row not counted
}

TEST_CASE("perfect and empty-support edge cases") {
  const LabelSchema s = default_poi_schema();
  const std::vector<int> same{kLast, kFirst, kOthers};
  const F1Report rep = entity_f1(same, same, s);
  CHECK(rep.macro_f1 == 1.0);
  CHECK(rep.accuracy == 1.0);
  // dob has no support and must not dilute the macro.
  CHECK(rep.per_category[kDob].support() == 0);

  const F1Report none = entity_f1({kNoCategory}, {kOthers}, s);
  CHECK(none.total == 0);
  CHECK(none.macro_f1 == 0.0);
  CHECK(none.accuracy == 0.0);
}

TEST_CASE("entity_f1 validates its inputs") {
  const LabelSchema s = default_poi_schema();
  CHECK_THROWS_AS(entity_f1({0, 1}, {0}, s), InvalidInputError);
  CHECK_THROWS_AS(entity_f1({8}, {0}, s), InvalidInputError);    // gold out of range
  CHECK_THROWS_AS(entity_f1({0}, {-1}, s), InvalidInputError);   // pred must be a real label
  CHECK_THROWS_AS(entity_f1({0}, {8}, s), InvalidInputError);
}

TEST_CASE("report serializes with stable keys") {
  const LabelSchema s = default_poi_schema();
  const F1Report rep = entity_f1({kLast, kKey}, {kLast, kKey}, s);
  const nlohmann::json j = to_json(rep);
  CHECK(j.at("macro_f1").get<double>() == 1.0);
  CHECK(j.at("accuracy").get<double>() == 1.0);
  CHECK(j.at("entities").get<long long>() == 2);
  CHECK(j.at("correct").get<long long>() == 2);
  REQUIRE(j.contains("per_category"));
  CHECK(j["per_category"].size() == 8);
  CHECK(j["per_category"]["last_name"]["f1"].get<double>() == 1.0);
  CHECK(j["per_category"]["last_name"]["support"].get<long long>() == 1);
  CHECK(j["per_category"]["id_number"]["unique"].get<bool>() == true);
  CHECK(j["per_category"]["others"]["unique"].get<bool>() == false);
}
