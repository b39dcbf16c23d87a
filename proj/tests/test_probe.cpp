#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "lsc/probe.hpp"
#include "lsc/rng.hpp"
#include "lsc/synth.hpp"

using namespace lsc;

namespace {

struct Builder {
  EmbeddingStore store;
  int next = 0;

  std::string add(std::vector<double> v, Stage stage = Stage::vision) {
    std::string id = "i" + std::to_string(next++);
    const std::size_t dim = v.size();
    store.add(EmbeddingRecord(id, stage, 1, dim, std::move(v)));
    return id;
  }

  BongardSample sample(const std::string& name, const std::vector<std::vector<double>>& pos,
                       const std::vector<std::vector<double>>& neg, std::vector<double> q, Label truth) {
    BongardSample s;
    s.sample_id = name;
    for (const auto& v : pos) s.positives.push_back(add(v));
    for (const auto& v : neg) s.negatives.push_back(add(v));
    s.query = add(std::move(q));
    s.truth = truth;
    return s;
  }
};

std::vector<double> gauss(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST(Batched, AxisExample) {
  Builder b;
  const auto s = b.sample("s", {{1, 0}}, {{0, 1}}, {1, 0}, Label::positive);
  const auto r = classify_batched(b.store, s, Stage::vision);
  EXPECT_EQ(r.predicted, Label::positive);
  EXPECT_DOUBLE_EQ(r.s_p, 1.0);
  EXPECT_DOUBLE_EQ(r.s_n, 0.0);
}

TEST(Batched, TieGoesPositive) {
  Builder b;
  const auto s = b.sample("s", {{1, 0}}, {{0, 1}}, {1, 1}, Label::negative);
  const auto r = classify_batched(b.store, s, Stage::vision);
  EXPECT_EQ(r.s_p, r.s_n);
  EXPECT_EQ(r.predicted, Label::positive);
}

TEST(Single, NearestExample) {
  Builder b;
  const double n = std::sqrt(0.82);
  const auto s = b.sample("s", {{1, 0}}, {{0, 1}}, {0.9 / n, 0.1 / n}, Label::positive);
  EXPECT_EQ(classify_single(b.store, s, Stage::vision).predicted, Label::positive);
}

TEST(Single, TieGoesPositive) {
  Builder b;
  // best positive and best negative are mirror images about the query
  const auto s = b.sample("s", {{1, 1}, {-1, 0}}, {{1, -1}, {-1, 0.5}}, {1, 0}, Label::negative);
  const auto r = classify_single(b.store, s, Stage::vision);
  EXPECT_EQ(r.s_p, r.s_n);
  EXPECT_EQ(r.predicted, Label::positive);
}

// One positive example sits almost on the query; the rest of the positive
// set lies near the query's antipode. Nearest neighbour follows the outlier,
// the centroid does not.
TEST(Single, OutlierSensitivity) {
  Builder b;
  const std::vector<std::vector<double>> pos{
      {0.999, 0.045}, {-1.0, 0.05}, {-1.0, -0.05}, {-0.98, 0.1}, {-0.99, -0.1}, {-1.0, 0.0}};
  const std::vector<std::vector<double>> neg{{0.2, 1.0},  {0.25, 1.0}, {0.15, 1.0},
                                             {0.2, 0.95}, {0.2, 1.05}, {0.22, 1.0}};
  const auto s = b.sample("s", pos, neg, {1, 0}, Label::negative);
  const auto single = classify_single(b.store, s, Stage::vision);
  const auto batched = classify_batched(b.store, s, Stage::vision);
  EXPECT_EQ(single.predicted, Label::positive);
  EXPECT_EQ(batched.predicted, Label::negative);
  EXPECT_GT(single.s_p, 0.99);
  EXPECT_LT(batched.s_p, 0.0);
}

TEST(Probe, InvalidSamples) {
  Builder b;
  auto s = b.sample("s", {{1, 0}, {0, 1}}, {{0, 1}}, {1, 0}, Label::positive);
  EXPECT_THROW(classify_batched(b.store, s, Stage::vision), Error);
  auto t = b.sample("t", {{1, 0}}, {{0, 1}}, {1, 0}, Label::positive);
  t.negatives[0] = t.positives[0];
  try {
    classify_batched(b.store, t, Stage::vision);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DuplicateId);
  }
}

TEST(Probe, MissingEmbeddingAborts) {
  Builder b;
  std::vector<BongardSample> samples{b.sample("a", {{1, 0}}, {{0, 1}}, {1, 0}, Label::positive),
                                     b.sample("b", {{1, 0}}, {{0, 1}}, {0, 1}, Label::negative)};
  samples[1].query = "nope";
  try {
    run_probe(b.store, samples, Stage::vision, Context::batched);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingEmbedding);
  }
  // the other stage has nothing at all
  samples[1].query = samples[0].query;
  EXPECT_THROW(run_probe(b.store, samples, Stage::final, Context::batched), Error);
}

TEST(Probe, AllCorrectAccuracy) {
  Builder b;
  std::vector<BongardSample> samples;
  for (int i = 0; i < 500; ++i) {
    const bool pos = i % 2 == 0;
    samples.push_back(b.sample("s" + std::to_string(1000 + i), {{1, 0}}, {{0, 1}},
                               pos ? std::vector<double>{1, 0.1} : std::vector<double>{0.1, 1},
                               pos ? Label::positive : Label::negative));
  }
  const auto acc = probe_accuracy(b.store, samples, Stage::vision, Context::batched);
  EXPECT_EQ(acc.p_hat, 1.0);
  EXPECT_EQ(acc.n, 500);
  EXPECT_EQ(acc.me, 0.0);
  ASSERT_EQ(acc.per_class.size(), 2u);
  EXPECT_EQ(acc.per_class[0].p_hat, 1.0);
  EXPECT_EQ(acc.per_class[1].p_hat, 1.0);
  EXPECT_EQ(acc.per_class[0].n, 250);
}

TEST(Probe, LscLabel) {
  EXPECT_TRUE(is_lsc(Stage::vision, Context::batched, Pooling::mean));
  EXPECT_FALSE(is_lsc(Stage::final, Context::batched, Pooling::mean));
  EXPECT_FALSE(is_lsc(Stage::vision, Context::single, Pooling::mean));
  EXPECT_FALSE(is_lsc(Stage::vision, Context::batched, Pooling::max));
  EXPECT_EQ(probe_label(Stage::vision, Context::batched, Pooling::mean), "LSC");
  EXPECT_EQ(probe_label(Stage::final, Context::single, Pooling::max), "probe:final/single/max");
}

class ProbeProperties : public ::testing::Test {
 protected:
  void SetUp() override {
    SynthConfig c;
    c.seed = 21;
    c.dim = 8;
    c.num_samples = 200;
    c.k = 4;
    c.separation = 1.5;
    ds = generate(c);
  }
  SynthDataset ds;
};

TEST_F(ProbeProperties, RotationInvariant) {
  const std::size_t dim = ds.config.dim;
  const auto rot = synth_detail::random_rotation(99, dim);
  EmbeddingStore rotated;
  for (const auto* r : ds.store.records(Stage::vision)) {
    std::vector<double> out(r->tokens().size());
    for (std::size_t t = 0; t < r->num_tokens(); ++t) {
      const auto row = r->token(t);
      for (std::size_t i = 0; i < dim; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < dim; ++j) acc += rot[i * dim + j] * row[j];
        out[t * dim + i] = acc;
      }
    }
    rotated.add(EmbeddingRecord(r->image_id(), Stage::vision, r->num_tokens(), dim, std::move(out)));
  }
  for (auto ctx : {Context::batched, Context::single}) {
    const auto a = run_probe(ds.store, ds.samples, Stage::vision, ctx);
    const auto b = run_probe(rotated, ds.samples, Stage::vision, ctx);
    for (std::size_t i = 0; i < a.results.size(); ++i) {
      // margins that survive rounding noise must keep their decision
      if (std::abs(a.results[i].s_p - a.results[i].s_n) > 1e-9) {
        EXPECT_EQ(a.results[i].predicted, b.results[i].predicted);
      }
      EXPECT_NEAR(a.results[i].s_p, b.results[i].s_p, 1e-12);
    }
  }
}

TEST_F(ProbeProperties, PermutationInvariant) {
  auto shuffled = ds.samples;
  Rng rng(4);
  for (auto& s : shuffled) {
    for (std::size_t i = s.positives.size() - 1; i > 0; --i) std::swap(s.positives[i], s.positives[rng.next_u64() % (i + 1)]);
    for (std::size_t i = s.negatives.size() - 1; i > 0; --i) std::swap(s.negatives[i], s.negatives[rng.next_u64() % (i + 1)]);
  }
  std::reverse(shuffled.begin(), shuffled.end());
  for (auto ctx : {Context::batched, Context::single}) {
    const auto a = run_probe(ds.store, ds.samples, Stage::vision, ctx);
    const auto b = run_probe(ds.store, shuffled, Stage::vision, ctx);
    EXPECT_EQ(a.accuracy, b.accuracy);
    for (std::size_t i = 0; i < a.results.size(); ++i) {
      EXPECT_EQ(a.results[i].sample_id, b.results[i].sample_id);
      EXPECT_NEAR(a.results[i].s_p, b.results[i].s_p, 1e-14);
    }
  }
}

TEST_F(ProbeProperties, SwapSetsFlipsPredictions) {
  auto swapped = ds.samples;
  for (auto& s : swapped) {
    std::swap(s.positives, s.negatives);
    s.truth = flip(s.truth);
  }
  for (auto ctx : {Context::batched, Context::single}) {
    const auto a = run_probe(ds.store, ds.samples, Stage::vision, ctx);
    const auto b = run_probe(ds.store, swapped, Stage::vision, ctx);
    EXPECT_DOUBLE_EQ(a.accuracy.p_hat, b.accuracy.p_hat);
    for (std::size_t i = 0; i < a.results.size(); ++i) {
      if (a.results[i].s_p == a.results[i].s_n) continue;  // tie rule is not symmetric
      EXPECT_EQ(b.results[i].predicted, flip(a.results[i].predicted));
    }
  }
}

TEST_F(ProbeProperties, PerClassAverage) {
  const auto run = run_probe(ds.store, ds.samples, Stage::vision, Context::batched);
  ASSERT_EQ(run.accuracy.per_class.size(), 2u);
  ASSERT_EQ(run.accuracy.per_class[0].n, run.accuracy.per_class[1].n);
  EXPECT_NEAR(run.accuracy.p_hat, 0.5 * (run.accuracy.per_class[0].p_hat + run.accuracy.per_class[1].p_hat), 1e-12);
}

TEST_F(ProbeProperties, WorkerCountIrrelevant) {
  const auto a = run_probe(ds.store, ds.samples, Stage::vision, Context::batched, Pooling::mean, 1);
  const auto b = run_probe(ds.store, ds.samples, Stage::vision, Context::batched, Pooling::mean, 7);
  EXPECT_EQ(a.accuracy, b.accuracy);
  for (std::size_t i = 0; i < a.results.size(); ++i) {
    EXPECT_EQ(a.results[i].s_p, b.results[i].s_p);
    EXPECT_EQ(a.results[i].s_n, b.results[i].s_n);
  }
}

TEST_F(ProbeProperties, MatchesOracle) {
  const auto run = run_probe(ds.store, ds.samples, Stage::vision, Context::batched);
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    EXPECT_EQ(run.results[i].predicted, oracle::predict(ds.store, ds.samples[i], Stage::vision));
  EXPECT_EQ(run.accuracy.p_hat, oracle_nearest_centroid(ds, Stage::vision));
}

TEST(Probe, RandomInstancesAgainstBruteForce) {
  // fully random unstructured samples, unequal token counts
  Rng rng(77);
  EmbeddingStore store;
  std::vector<BongardSample> samples;
  int id = 0;
  auto add = [&](std::size_t dim) {
    const std::size_t tokens = 1 + rng.next_u64() % 5;
    std::vector<double> v;
    for (std::size_t t = 0; t < tokens; ++t)
      for (double x : gauss(rng, dim)) v.push_back(x);
    std::string name = "r" + std::to_string(id++);
    store.add(EmbeddingRecord(name, Stage::vision, tokens, dim, std::move(v)));
    return name;
  };
  for (int s = 0; s < 300; ++s) {
    BongardSample b;
    b.sample_id = "s" + std::to_string(1000 + s);
    const std::size_t k = 1 + rng.next_u64() % 6;
    for (std::size_t j = 0; j < k; ++j) b.positives.push_back(add(6));
    for (std::size_t j = 0; j < k; ++j) b.negatives.push_back(add(6));
    b.query = add(6);
    b.truth = rng.bernoulli(0.5) ? Label::positive : Label::negative;
    samples.push_back(b);
  }
  const auto run = run_probe(store, samples, Stage::vision, Context::batched);
  for (std::size_t i = 0; i < samples.size(); ++i)
    EXPECT_EQ(run.results[i].predicted, oracle::predict(store, samples[i], Stage::vision));
}
