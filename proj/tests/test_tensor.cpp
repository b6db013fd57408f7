#include <catch_amalgamated.hpp>

#include <cmath>

#include <knnformer/tensor.hpp>

#include "oracles.hpp"

using namespace knnf;

namespace {

// Reduce a matrix-valued op to a scalar with a fixed random weighting so the
// finite-difference checker can probe the whole Jacobian at once.
Tensor weighted(const Tensor& x, const Grid<double>& w) { return sum_all(mul(x, make_tensor(w))); }

}  // namespace

TEST_CASE("matmul forward value") {
  auto a = make_tensor(Grid<double>(2, 2, 0.0));
  a->value(0, 0) = 1; a->value(0, 1) = 2; a->value(1, 0) = 3; a->value(1, 1) = 4;
  auto b = make_tensor(Grid<double>(2, 2, 0.0));
  b->value(0, 0) = 5; b->value(0, 1) = 6; b->value(1, 0) = 7; b->value(1, 1) = 8;
  const Tensor c = matmul(a, b);
  CHECK(c->value(0, 0) == 19);
  CHECK(c->value(0, 1) == 22);
  CHECK(c->value(1, 0) == 43);
  CHECK(c->value(1, 1) == 50);
}

TEST_CASE("mm kernels accumulate into the output and check shapes") {
  Rng rng(3);
  const Grid<double> a = knnft::random_grid(rng, 3, 4);
  const Grid<double> b = knnft::random_grid(rng, 4, 2);
  Grid<double> c(3, 2, 1.0);
  mm_nn_acc(a, b, c);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) {
      double s = 1.0;
      for (int p = 0; p < 4; ++p) s += a(i, p) * b(p, j);
      CHECK(c(i, j) == Catch::Approx(s));
    }
  Grid<double> bad(2, 2, 0.0);
  CHECK_THROWS_AS(mm_nn_acc(a, b, bad), InvalidShapeError);
  Grid<double> cnt(3, 4, 0.0);
  CHECK_THROWS_AS(mm_nt_acc(a, b, cnt), InvalidShapeError);
}

TEST_CASE("finite differences agree for every core op") {
  Rng rng(41);
  const Grid<double> w43 = knnft::random_grid(rng, 4, 3);
  const Grid<double> w44 = knnft::random_grid(rng, 4, 4);
  const Grid<double> w45 = knnft::random_grid(rng, 4, 5);

  auto a = make_param(knnft::random_grid(rng, 4, 3));
  auto b = make_param(knnft::random_grid(rng, 3, 3));
  auto c = make_param(knnft::random_grid(rng, 4, 3));
  auto bias = make_param(knnft::random_grid(rng, 1, 3));
  auto d2 = make_param(knnft::random_grid(rng, 4, 2));
  auto gamma = make_param(knnft::random_grid(rng, 1, 3, 0.5, 1.5));
  auto beta = make_param(knnft::random_grid(rng, 1, 3));
  auto table = make_param(knnft::random_grid(rng, 6, 3));

  SECTION("matmul") {
    auto res = knnft::fd_check({{"a", a}, {"b", b}}, [&] { return weighted(matmul(a, b), w43); });
    CAPTURE(res.checked);
    CHECK(res.ok());
  }
  SECTION("matmul_nt") {
    auto res = knnft::fd_check({{"a", a}, {"c", c}}, [&] { return weighted(matmul_nt(a, c), w44); });
    CHECK(res.ok());
  }
  SECTION("add and sub") {
    auto res = knnft::fd_check({{"a", a}, {"c", c}},
                               [&] { return weighted(sub(add(a, c), c), w43); });
    CHECK(res.ok());
  }
  SECTION("scale") {
    auto res = knnft::fd_check({{"a", a}}, [&] { return weighted(scale(a, -1.7), w43); });
    CHECK(res.ok());
  }
  SECTION("mul") {
    auto res = knnft::fd_check({{"a", a}, {"c", c}}, [&] { return weighted(mul(a, c), w43); });
    CHECK(res.ok());
  }
  SECTION("bias_add") {
    auto res = knnft::fd_check({{"a", a}, {"bias", bias}},
                               [&] { return weighted(bias_add(a, bias), w43); });
    CHECK(res.ok());
  }
  SECTION("concat_cols") {
    auto res = knnft::fd_check({{"a", a}, {"d2", d2}},
                               [&] { return weighted(concat_cols(a, d2), w45); });
    CHECK(res.ok());
  }
  SECTION("row_softmax unmasked") {
    auto res = knnft::fd_check({{"a", a}}, [&] { return weighted(row_softmax(a), w43); });
    CHECK(res.ok());
  }
  SECTION("row_softmax masked") {
    Grid<uint8_t> mask(4, 3, 1);
    mask(0, 2) = 0;
    mask(2, 0) = 0;
    mask(2, 1) = 0;
    auto res = knnft::fd_check({{"a", a}}, [&] { return weighted(row_softmax(a, mask), w43); });
    CHECK(res.ok());
  }
  SECTION("layer_norm") {
    auto res = knnft::fd_check({{"a", a}, {"gamma", gamma}, {"beta", beta}},
                               [&] { return weighted(layer_norm(a, gamma, beta), w43); });
    CHECK(res.ok());
  }
  SECTION("gelu") {
    auto res = knnft::fd_check({{"a", a}}, [&] { return weighted(gelu(a), w43); });
    CHECK(res.ok());
  }
  SECTION("embedding_lookup") {
    const std::vector<int> idx{3, 0, 3, 5};
    auto res = knnft::fd_check({{"table", table}},
                               [&] { return weighted(embedding_lookup(table, idx), w43); });
    CHECK(res.ok());
  }
  SECTION("cross_entropy with ignored rows") {
    const std::vector<int> targets{2, -1, 0, 1};
    auto res = knnft::fd_check({{"a", a}}, [&] { return cross_entropy(a, targets); });
    CHECK(res.ok());
  }
  SECTION("sum_all") {
    auto res = knnft::fd_check({{"a", a}}, [&] { return sum_all(a); });
    CHECK(res.ok());
  }
}

TEST_CASE("row_softmax masked cells are exactly zero and rows sum to one") {
  Rng rng(5);
  auto a = make_tensor(knnft::random_grid(rng, 5, 5, -3.0, 3.0));
  Grid<uint8_t> mask(5, 5, 0);
  for (int i = 0; i < 5; ++i) {
    mask(i, i) = 1;
    mask(i, (i + 2) % 5) = 1;
  }
  const Tensor p = row_softmax(a, mask);
  for (int i = 0; i < 5; ++i) {
    double row = 0.0;
    for (int j = 0; j < 5; ++j) {
      if (!mask(i, j)) CHECK(p->value(i, j) == 0.0);
      row += p->value(i, j);
    }
    CHECK(row == Catch::Approx(1.0));
  }
}

TEST_CASE("row_softmax rejects a fully masked row") {
  auto a = make_tensor(Grid<double>(2, 3, 0.0));
  Grid<uint8_t> mask(2, 3, 1);
  mask(1, 0) = mask(1, 1) = mask(1, 2) = 0;
  CHECK_THROWS_AS(row_softmax(a, mask), InvalidMaskError);
  Grid<uint8_t> wrong(3, 3, 1);
  CHECK_THROWS_AS(row_softmax(a, wrong), InvalidShapeError);
}

TEST_CASE("cross_entropy value and validation") {
  auto logits = make_tensor(Grid<double>(1, 2, 0.0));
  const Tensor loss = cross_entropy(logits, {0});
  CHECK(loss->value(0, 0) == Catch::Approx(std::log(2.0)));

  auto l2 = make_tensor(Grid<double>(2, 3, 0.0));
  CHECK_THROWS_AS(cross_entropy(l2, {0}), InvalidShapeError);         // wrong target count
  CHECK_THROWS_AS(cross_entropy(l2, {-1, -1}), InvalidInputError);    // nothing labeled
  CHECK_THROWS_AS(cross_entropy(l2, {0, 3}), InvalidInputError);      // target out of range
}

TEST_CASE("backward demands a scalar root") {
  auto a = make_param(Grid<double>(2, 2, 1.0));
  CHECK_THROWS_AS(backward(add(a, a)), InvalidShapeError);
  CHECK_THROWS_AS(backward(Tensor()), InvalidInputError);
}

TEST_CASE("gradients accumulate across backward passes until cleared") {
  auto a = make_param(Grid<double>(1, 3, 2.0));
  const auto run = [&] { backward(sum_all(mul(a, a))); };
  run();
  REQUIRE(a->grad.rows() == 1);
  CHECK(a->grad(0, 0) == Catch::Approx(4.0));  // d(x^2)/dx = 2x
  run();
  CHECK(a->grad(0, 0) == Catch::Approx(8.0));  // accumulated
  a->zero_grad();
  CHECK(a->grad.rows() == 0);
}

TEST_CASE("NoGradGuard detaches newly built ops") {
  auto a = make_param(Grid<double>(1, 2, 1.0));
  Tensor out;
  {
    NoGradGuard quiet;
    out = sum_all(a);
  }
  CHECK_FALSE(out->requires_grad);
  CHECK(out->parents.empty());
  backward(out);  // no-op: nothing requires grad
  CHECK(a->grad.rows() == 0);
}

TEST_CASE("accumulate rejects a mismatched gradient shape") {
  auto a = make_param(Grid<double>(2, 2, 0.0));
  CHECK_THROWS_AS(a->accumulate(Grid<double>(1, 2, 0.0)), InvalidShapeError);
}

TEST_CASE("a tensor reused in two places receives both contributions") {
  auto a = make_param(Grid<double>(1, 1, 3.0));
  backward(sum_all(mul(a, a)));  // same node on both sides
  CHECK(a->grad(0, 0) == Catch::Approx(6.0));
}

TEST_CASE("softmax_rows plain helper matches the op") {
  Rng rng(9);
  const Grid<double> logits = knnft::random_grid(rng, 4, 6, -2.0, 2.0);
  const Grid<double> plain = softmax_rows(logits);
  const Tensor viaop = row_softmax(make_tensor(logits));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 6; ++j) CHECK(plain(i, j) == Catch::Approx(viaop->value(i, j)));
}
