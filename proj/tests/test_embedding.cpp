#include <cmath>

#include "doctest.h"
#include "pier/embedding.hpp"
#include "pier/errors.hpp"

using namespace pier;

TEST_CASE("embedding table construction") {
  CHECK_THROWS_AS(EmbeddingTable({4, 4}, 7, 1), ContractError);
  CHECK_THROWS_AS(EmbeddingTable({4, 4}, 0, 1), ContractError);
  const EmbeddingTable t({5, 3}, 8, 42);
  CHECK(t.fields() == 2);
  CHECK(t.vocab_size(1) == 3);
  const double bound = 1.0 / std::sqrt(8.0);
  for (std::size_t j = 0; j < 2; ++j)
    for (double v : t.field(j).value.values()) CHECK(std::abs(v) <= bound);
  CHECK(EmbeddingTable({5, 3}, 8, 42).field(0).value == t.field(0).value);
  CHECK_FALSE(EmbeddingTable({5, 3}, 8, 43).field(0).value == t.field(0).value);
}

TEST_CASE("lookup errors name field and id") {
  const EmbeddingTable t({5, 3}, 4, 1);
  try {
    (void)t.lookup(1, 3);
    FAIL("expected LookupError");
  } catch (const LookupError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("field 1") != std::string::npos);
    CHECK(msg.find("id 3") != std::string::npos);
  }
  CHECK_THROWS_AS(t.lookup(0, -1), LookupError);
}

TEST_CASE("embed_permutation") {
  EmbeddingTable t({6, 4}, 4, 9);
  SUBCASE("slab i, j equals table lookup") {
    const FeatureId feats[] = {0, 1, 5, 3, 2, 0};  // 3 items x 2 fields
    const Tensor m = embed_permutation(feats, t);
    CHECK(m.shape() == Shape{3, 2, 4});
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        const auto row = t.lookup(j, feats[i * 2 + j]);
        for (std::size_t c = 0; c < 4; ++c) CHECK(m[(i * 2 + j) * 4 + c] == row[c]);
      }
  }
  SUBCASE("repeated item gives equal rows") {
    const FeatureId feats[] = {2, 1, 2, 1, 2, 1};
    const Tensor m = embed_permutation(feats, t);
    for (std::size_t k = 0; k < 8; ++k) {
      CHECK(m[k] == m[8 + k]);
      CHECK(m[k] == m[16 + k]);
    }
  }
  SUBCASE("zero table gives zero matrix") {
    for (std::size_t j = 0; j < 2; ++j) t.field(j).value.fill(0.0);
    const FeatureId feats[] = {0, 1, 5, 3};
    const Tensor m = embed_permutation(feats, t);
    for (double v : m.values()) CHECK(v == 0.0);
  }
  SUBCASE("reordering items permutes rows") {
    const FeatureId a[] = {0, 1, 5, 3};
    const FeatureId b[] = {5, 3, 0, 1};
    const Tensor ma = embed_permutation(a, t), mb = embed_permutation(b, t);
    for (std::size_t k = 0; k < 8; ++k) {
      CHECK(ma[k] == mb[8 + k]);
      CHECK(ma[8 + k] == mb[k]);
    }
  }
  SUBCASE("out of vocab") {
    const FeatureId feats[] = {0, 4};
    CHECK_THROWS_AS(embed_permutation(feats, t), LookupError);
  }
}

TEST_CASE("position encoding") {
  const Tensor& pe = position_encoding(3, 8);
  CHECK(pe.shape() == Shape{3, 8});
  for (std::size_t c = 0; c < 8; ++c) CHECK(pe.at(0, c) == (c % 2 == 0 ? 0.0 : 1.0));
  CHECK(pe.at(1, 0) == doctest::Approx(0.841471).epsilon(1e-6));
  for (double v : pe.values()) CHECK(std::abs(v) <= 1.0);
  // Direct substitution for every entry.
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t d = 0; d < 4; ++d) {
      const double angle = static_cast<double>(i) / std::pow(10000.0, 2.0 * d / 8.0);
      CHECK(std::abs(pe.at(i, 2 * d) - std::sin(angle)) < 1e-15);
      CHECK(std::abs(pe.at(i, 2 * d + 1) - std::cos(angle)) < 1e-15);
    }
  CHECK(&position_encoding(3, 8) == &pe);
  CHECK_THROWS_AS(position_encoding(3, 7), ContractError);
}
