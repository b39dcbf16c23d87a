#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "lsc/embedding.hpp"
#include "lsc/rng.hpp"

using namespace lsc;

namespace {

EmbeddingRecord rec(std::vector<std::vector<double>> rows, std::string id = "img") {
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  const std::size_t dim = rows.front().size();
  return EmbeddingRecord(std::move(id), Stage::vision, rows.size(), dim, std::move(flat));
}

PooledVector pv(std::vector<double> v) { return PooledVector{"x", Stage::vision, std::move(v)}; }

const double kHalfRoot2 = std::numbers::sqrt2 / 2.0;

}  // namespace

TEST(Pool, SingleTokenIsNormalization) {
  const auto p = pool(rec({{3, 4}}));
  EXPECT_NEAR(p.v[0], 0.6, 1e-15);
  EXPECT_NEAR(p.v[1], 0.8, 1e-15);
}

TEST(Pool, MeanOfTwoAxes) {
  const auto p = pool(rec({{1, 0}, {0, 1}}), Pooling::mean);
  EXPECT_NEAR(p.v[0], kHalfRoot2, 1e-15);
  EXPECT_NEAR(p.v[1], kHalfRoot2, 1e-15);
}

TEST(Pool, MaxOfTwoAxes) {
  const auto p = pool(rec({{1, 0}, {0, 1}}), Pooling::max);
  EXPECT_NEAR(p.v[0], kHalfRoot2, 1e-15);
  EXPECT_NEAR(p.v[1], kHalfRoot2, 1e-15);
}

TEST(Pool, MaxTakesPerCoordinateMax) {
  const auto p = pool(rec({{-1, 2, 0}, {3, -5, 0}, {0, 0, 4}}), Pooling::max);
  const double n = std::sqrt(9.0 + 4.0 + 16.0);
  EXPECT_NEAR(p.v[0], 3 / n, 1e-15);
  EXPECT_NEAR(p.v[1], 2 / n, 1e-15);
  EXPECT_NEAR(p.v[2], 4 / n, 1e-15);
}

TEST(Pool, ZeroMeanIsZeroVector) {
  try {
    pool(rec({{1, 0}, {-1, 0}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroVector);
  }
}

TEST(Pool, Renormalizing) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::vector<double>> rows(5, std::vector<double>(7));
    for (auto& r : rows)
      for (auto& x : r) x = rng.normal();
    const auto p = pool(rec(rows));
    const auto again = normalized(p.v);
    for (std::size_t j = 0; j < p.v.size(); ++j) EXPECT_NEAR(again[j], p.v[j], 1e-12);
  }
}

TEST(Pool, TokenOrderDoesNotMatter) {
  Rng rng(11);
  std::vector<std::vector<double>> rows(6, std::vector<double>(5));
  for (auto& r : rows)
    for (auto& x : r) x = rng.normal();
  auto reversed = rows;
  std::reverse(reversed.begin(), reversed.end());
  for (auto m : {Pooling::mean, Pooling::max}) {
    const auto a = pool(rec(rows), m);
    const auto b = pool(rec(reversed), m);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(a.v[j], b.v[j], 1e-14);
  }
}

TEST(Cosine, Examples) {
  const std::vector<double> e1{1, 0}, e2{0, 1};
  EXPECT_DOUBLE_EQ(cosine(pv(e1), e1), 1.0);
  EXPECT_DOUBLE_EQ(cosine(pv(e1), e2), 0.0);
  EXPECT_NEAR(cosine(pv({0.6, 0.8}), std::vector<double>{0.8, 0.6}), 0.96, 1e-15);
}

TEST(Cosine, ScaleInvariant) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> q(9), c(9);
    for (auto& x : q) x = rng.normal();
    for (auto& x : c) x = rng.normal();
    const double lambda = 0.01 + 10.0 * rng.uniform();
    auto scaled = c;
    for (auto& x : scaled) x *= lambda;
    EXPECT_NEAR(cosine(q, c), cosine(q, scaled), 1e-14);
  }
}

TEST(Cosine, ZeroNormRejected) {
  const std::vector<double> z{0, 0}, e1{1, 0};
  EXPECT_THROW(cosine(z, e1), Error);
}

TEST(Centroid, Examples) {
  std::vector<PooledVector> one{pv({1, 0})};
  auto c = centroid(one);
  EXPECT_DOUBLE_EQ(c[0], 1.0);
  EXPECT_DOUBLE_EQ(c[1], 0.0);

  std::vector<PooledVector> two{pv({1, 0}), pv({0, 1})};
  c = centroid(two);
  EXPECT_NEAR(c[0], kHalfRoot2, 1e-15);
  EXPECT_NEAR(c[1], kHalfRoot2, 1e-15);
}

TEST(Centroid, AntipodalCollapse) {
  std::vector<PooledVector> anti{pv({1, 0}), pv({-1, 0})};
  try {
    centroid(anti);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroVector);
  }
}

TEST(Centroid, EmptySet) {
  std::vector<PooledVector> none;
  try {
    centroid(none);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptySet);
  }
}

TEST(Centroid, MixedDims) {
  std::vector<PooledVector> mixed{pv({1, 0}), pv({0, 1, 0})};
  try {
    centroid(mixed);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(Centroid, PermutationInvariant) {
  Rng rng(8);
  std::vector<PooledVector> members;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> v(4);
    for (auto& x : v) x = rng.normal();
    members.push_back(pv(normalized(v)));
  }
  const auto a = centroid(members);
  std::reverse(members.begin(), members.end());
  std::swap(members[1], members[4]);
  const auto b = centroid(members);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(a[j], b[j], 1e-14);
}

TEST(Record, Validation) {
  EXPECT_THROW(EmbeddingRecord("a", Stage::vision, 0, 2, {}), Error);
  EXPECT_THROW(EmbeddingRecord("a", Stage::vision, 1, 2, {1.0}), Error);
  try {
    EmbeddingRecord("a", Stage::vision, 1, 2, {1.0, std::nan("")});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteInput);
  }
}

TEST(Store, DimAndDuplicates) {
  EmbeddingStore s;
  s.add(rec({{1, 0}}, "a"));
  try {
    s.add(rec({{1, 0, 0}}, "b"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
  try {
    s.add(rec({{0, 1}}, "a"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DuplicateId);
  }
  // same id at the other stage is fine, and may have its own dim
  s.add(EmbeddingRecord("a", Stage::final, 1, 3, {0, 0, 1}));
  EXPECT_EQ(s.dim(Stage::vision), 2u);
  EXPECT_EQ(s.dim(Stage::final), 3u);
  EXPECT_EQ(s.size(), 2u);
  try {
    (void)s.at("zzz", Stage::vision);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingEmbedding);
  }
}
