#include <cmath>
#include <random>

#include "doctest.h"
#include "pier/autograd.hpp"
#include "pier/errors.hpp"
#include "pier/gradcheck.hpp"
#include "pier/layers.hpp"
#include "pier/tensor.hpp"

using namespace pier;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t({r, c});
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Independent oracle: textbook triple loop, j innermost over k.
Tensor triple_loop(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      out.at(i, j) = s;
    }
  return out;
}

}  // namespace

TEST_CASE("matmul identity and selector") {
  const Tensor id = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(matmul(id, m) == m);
  CHECK(matmul(Tensor::matrix({{1, 0}}), Tensor::matrix({{5}, {7}})) == Tensor::matrix({{5}}));
}

TEST_CASE("matmul matches triple loop oracle") {
  std::mt19937_64 rng(11);
  const Tensor a = random_matrix(3, 4, rng), b = random_matrix(4, 2, rng);
  CHECK(max_abs_diff(matmul(a, b), triple_loop(a, b)) == 0.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    (void)matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3] x [2x3]") != std::string::npos);
  }
}

TEST_CASE("softmax rows") {
  CHECK(softmax_rows(Tensor::matrix({{0, 0}})) == Tensor::matrix({{0.5, 0.5}}));
  CHECK(softmax_rows(Tensor::matrix({{-123.0}}))[0] == 1.0);
  const Tensor big = softmax_rows(Tensor::matrix({{1000, 0}}));
  CHECK(big.all_finite());
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] < 1e-300);
  std::mt19937_64 rng(3);
  const Tensor s = softmax_rows(random_matrix(20, 7, rng));
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double sum = 0.0;
    for (double v : s.row(r)) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("scaled dot attention") {
  std::mt19937_64 rng(5);
  SUBCASE("single row returns V") {
    const Tensor q = random_matrix(1, 3, rng), k = random_matrix(1, 3, rng),
                 v = random_matrix(1, 3, rng);
    CHECK(scaled_dot_attention(q, k, v) == v);
  }
  SUBCASE("zero logits average V") {
    const Tensor z({4, 2});
    const Tensor v = random_matrix(4, 2, rng);
    const Tensor out = scaled_dot_attention(z, z, v);
    for (std::size_t c = 0; c < 2; ++c) {
      const double mean = (v.at(0, c) + v.at(1, c) + v.at(2, c) + v.at(3, c)) / 4.0;
      for (std::size_t r = 0; r < 4; ++r) CHECK(std::abs(out.at(r, c) - mean) < 1e-12);
    }
  }
  SUBCASE("2x2 against direct formula") {
    const Tensor q = random_matrix(2, 2, rng), k = random_matrix(2, 2, rng),
                 v = random_matrix(2, 2, rng);
    const Tensor out = scaled_dot_attention(q, k, v);
    for (std::size_t i = 0; i < 2; ++i) {
      double logit[2], z = 0.0;
      for (std::size_t j = 0; j < 2; ++j) {
        logit[j] = std::exp((q.at(i, 0) * k.at(j, 0) + q.at(i, 1) * k.at(j, 1)) / std::sqrt(2.0));
        z += logit[j];
      }
      for (std::size_t c = 0; c < 2; ++c) {
        const double expect = (logit[0] * v.at(0, c) + logit[1] * v.at(1, c)) / z;
        CHECK(std::abs(out.at(i, c) - expect) < 1e-12);
      }
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(scaled_dot_attention(Tensor({2, 2}), Tensor({3, 2}), Tensor({2, 2})),
                    DimensionError);
  }
}

TEST_CASE("block attention equals per-block attention") {
  std::mt19937_64 rng(8);
  const Tensor q = random_matrix(6, 4, rng), k = random_matrix(6, 4, rng),
               v = random_matrix(6, 4, rng);
  Graph g(false);
  const Tensor out = ag::block_attention(g.constant(q), g.constant(k), g.constant(v), 3).value();
  for (std::size_t b = 0; b < 2; ++b) {
    Tensor qb({3, 4}), kb({3, 4}), vb({3, 4});
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 4; ++c) {
        qb.at(r, c) = q.at(3 * b + r, c);
        kb.at(r, c) = k.at(3 * b + r, c);
        vb.at(r, c) = v.at(3 * b + r, c);
      }
    const Tensor ref = scaled_dot_attention(qb, kb, vb);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(out.at(3 * b + r, c) - ref.at(r, c)) < 1e-12);
  }
}

TEST_CASE("mlp forward") {
  std::mt19937_64 rng(1);
  const std::size_t widths[] = {2};
  Mlp mlp = make_mlp("m", 2, widths, Activation::kRelu, Activation::kRelu, rng);
  const Tensor x = Tensor::matrix({{0.3, -2.0}});
  SUBCASE("zero weights give zero") {
    mlp.layers[0].weight.value.fill(0.0);
    CHECK(mlp_forward(x, mlp) == Tensor({1, 2}));
  }
  SUBCASE("identity layer passes input") {
    mlp.layers[0].weight.value = Tensor::matrix({{1, 0}, {0, 1}});
    mlp.layers[0].activation = Activation::kIdentity;
    CHECK(mlp_forward(x, mlp) == x);
  }
  SUBCASE("hand-computed hidden relu") {
    const std::size_t w2[] = {2, 1};
    Mlp two = make_mlp("h", 2, w2, Activation::kRelu, Activation::kIdentity, rng);
    two.layers[0].weight.value = Tensor::matrix({{1, -1}, {2, 1}});
    two.layers[0].bias.value = Tensor::vector({0.5, 0.0});
    two.layers[1].weight.value = Tensor::matrix({{3}, {-1}});
    two.layers[1].bias.value = Tensor::vector({0.25});
    // x = (1, 2): hidden = relu(1 + 4 + 0.5, -1 + 2) = (5.5, 1); out = 16.5 - 1 + 0.25
    const Tensor out = mlp_forward(Tensor::matrix({{1, 2}}), two);
    CHECK(out[0] == doctest::Approx(15.75).epsilon(1e-15));
  }
  SUBCASE("chained dimension mismatch") {
    CHECK_THROWS_AS(mlp_forward(Tensor({1, 3}), mlp), DimensionError);
  }
}

TEST_CASE("backward basics") {
  Parameter x{"x", Tensor::matrix({{1.5, -2.0, 0.25}})};
  Parameter unused{"unused", Tensor::vector({1.0, 2.0})};
  SUBCASE("sum gives ones") {
    Graph g;
    Var vx = g.parameter(x);
    g.parameter(unused);
    const Gradients grads = g.backward(ag::sum(vx));
    CHECK(grads.of(x) == Tensor({1, 3}, 1.0));
    CHECK(grads.of(unused) == Tensor({2}));
  }
  SUBCASE("sum of squares gives 2x") {
    Graph g;
    Var vx = g.parameter(x);
    const Gradients grads = g.backward(ag::sum(ag::mul(vx, vx)));
    CHECK(grads.of(x) == Tensor::matrix({{3.0, -4.0, 0.5}}));
  }
  SUBCASE("non-scalar loss rejected") {
    Graph g;
    Var vx = g.parameter(x);
    CHECK_THROWS_AS(g.backward(vx), ContractError);
  }
  SUBCASE("inference graph refuses backward") {
    Graph g(false);
    Var vx = g.parameter(x);
    CHECK_THROWS_AS(g.backward(ag::sum(vx)), ContractError);
  }
}

TEST_CASE("forward determinism") {
  std::mt19937_64 rng(2);
  const std::size_t widths[] = {5, 3};
  const Mlp mlp = make_mlp("d", 4, widths, Activation::kRelu, Activation::kSigmoid, rng);
  const Tensor x = random_matrix(6, 4, rng);
  CHECK(mlp_forward(x, mlp) == mlp_forward(x, mlp));
}

TEST_CASE("grad_check") {
  std::mt19937_64 rng(4);
  SUBCASE("quadratic") {
    Parameter p{"p", random_matrix(3, 3, rng)};
    Parameter* ps[] = {&p};
    const auto r = grad_check(
        [&](Graph& g) {
          Var v = g.parameter(p);
          return ag::sum(ag::mul(v, ag::scale(v, 3.0)));
        },
        ps);
    CHECK(r.max_relative_error < 1e-9);
    CHECK(r.entries_checked == 9);
  }
  SUBCASE("sigmoid bce toy") {
    const std::size_t widths[] = {4, 1};
    Mlp mlp = make_mlp("t", 3, widths, Activation::kRelu, Activation::kIdentity, rng);
    const Tensor x = random_matrix(5, 3, rng);
    const std::vector<double> y = {1, 0, 0, 1, 1};
    auto params = mlp.parameters();
    const auto r = grad_check(
        [&](Graph& g) { return ag::bce_sum(ag::sigmoid(mlp_forward(g, g.constant(x), mlp)), y); },
        params);
    CHECK(r.max_relative_error < 1e-6);
  }
  SUBCASE("every op composed") {
    Parameter a{"a", random_matrix(4, 3, rng)};
    Parameter b{"b", random_matrix(3, 3, rng)};
    Parameter bias{"bias", Tensor::vector({0.1, -0.2, 0.3})};
    Parameter* ps[] = {&a, &b, &bias};
    const std::int32_t ids[] = {2, 0, 2, 3, 1, 1};
    const auto r = grad_check(
        [&](Graph& g) {
          Var va = g.parameter(a), vb = g.parameter(b);
          Var rows = ag::gather_rows(va, ids);                             // 6x3
          Var att = ag::block_attention(ag::matmul(rows, vb), rows, rows, 3);
          Var h = ag::add_bias(att, g.parameter(bias));
          Var s = ag::softmax_rows(ag::relu(ag::sub(h, ag::scale(rows, 0.5))));
          const Var parts[] = {s, ag::sigmoid(h)};
          Var c = ag::concat_cols(parts);                                  // 6x6
          Var m = ag::mul_col(ag::repeat_rows(c, 2), ag::row_mean(ag::repeat_rows(h, 2)));
          Var grouped = ag::sum_row_groups(ag::reshape(m, {6, 12}), 2);    // 3x12
          Var sliced = ag::slice_rows(grouped, 1, 3);
          return ag::add(ag::sum(ag::mul(sliced, sliced)), ag::sum(ag::activate(h, Activation::kRelu)));
        },
        ps);
    CHECK(r.max_relative_error < 1e-6);
  }
  SUBCASE("eps out of range") {
    Parameter p{"p", Tensor::vector({1.0})};
    Parameter* ps[] = {&p};
    CHECK_THROWS_AS(grad_check([&](Graph& g) { return ag::sum(g.parameter(p)); }, ps, 1e-2),
                    ContractError);
  }
  SUBCASE("non-finite names parameter") {
    Parameter p{"bad_weight", Tensor::vector({0.0})};
    Parameter* ps[] = {&p};
    try {
      grad_check(
          [&](Graph& g) {
            Var v = g.parameter(p);
            return ag::sum(ag::scale(v, std::numeric_limits<double>::infinity()));
          },
          ps);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("bad_weight") != std::string::npos);
    }
  }
}
