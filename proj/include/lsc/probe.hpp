#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "lsc/embedding.hpp"
#include "lsc/error.hpp"
#include "lsc/parallel.hpp"
#include "lsc/stats.hpp"

namespace lsc {

/// Batched context compares the query against per-set centroids; single
/// context against the closest individual example.
enum class Context { batched, single };

constexpr std::string_view to_string(Context c) { return c == Context::batched ? "batched" : "single"; }

/// One task instance: k positive and k negative examples plus a query.
struct BongardSample {
  std::string sample_id;
  std::vector<std::string> positives;
  std::vector<std::string> negatives;
  std::string query;
  Label truth = Label::positive;
  std::optional<std::string> split_tag;

  friend bool operator==(const BongardSample&, const BongardSample&) = default;
};

inline void validate(const BongardSample& s) {
  if (s.positives.empty() || s.positives.size() != s.negatives.size())
    throw Error(ErrorKind::InvalidInput, "sample '" + s.sample_id + "' needs k >= 1 positives and k negatives, got " +
                                             std::to_string(s.positives.size()) + "/" +
                                             std::to_string(s.negatives.size()));
  std::set<std::string_view> seen;
  auto check = [&](const std::string& id) {
    if (!seen.insert(id).second)
      throw Error(ErrorKind::DuplicateId, "sample '" + s.sample_id + "' references image '" + id + "' twice");
  };
  for (const auto& id : s.positives) check(id);
  for (const auto& id : s.negatives) check(id);
  check(s.query);
}

struct ProbeResult {
  std::string sample_id;
  Label predicted = Label::positive;
  double s_p = 0.0;
  double s_n = 0.0;
  Stage stage = Stage::vision;
  Context context = Context::batched;
};

/// Exact ties go to the positive set.
constexpr Label decide(double s_p, double s_n) { return s_p >= s_n ? Label::positive : Label::negative; }

namespace detail {

inline std::vector<PooledVector> pool_all(const EmbeddingStore& store, const std::vector<std::string>& ids,
                                          Stage stage, Pooling pooling) {
  std::vector<PooledVector> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(pool(store.at(id, stage), pooling));
  return out;
}

inline double best_similarity(const PooledVector& query, const std::vector<PooledVector>& examples) {
  double best = -2.0;
  for (const auto& e : examples) best = std::max(best, cosine(query, e.v));
  return best;
}

}  // namespace detail

inline ProbeResult classify_batched(const EmbeddingStore& store, const BongardSample& sample, Stage stage,
                                    Pooling pooling = Pooling::mean) {
  validate(sample);
  const auto pos = detail::pool_all(store, sample.positives, stage, pooling);
  const auto neg = detail::pool_all(store, sample.negatives, stage, pooling);
  const auto query = pool(store.at(sample.query, stage), pooling);
  const auto c_p = centroid(pos);
  const auto c_n = centroid(neg);
  const double s_p = cosine(query, c_p);
  const double s_n = cosine(query, c_n);
  return ProbeResult{sample.sample_id, decide(s_p, s_n), s_p, s_n, stage, Context::batched};
}

/// Nearest neighbour over positives and negatives. s_p / s_n are the best
/// similarity within each set, so the decision rule is the same as batched.
inline ProbeResult classify_single(const EmbeddingStore& store, const BongardSample& sample, Stage stage,
                                   Pooling pooling = Pooling::mean) {
  validate(sample);
  const auto pos = detail::pool_all(store, sample.positives, stage, pooling);
  const auto neg = detail::pool_all(store, sample.negatives, stage, pooling);
  const auto query = pool(store.at(sample.query, stage), pooling);
  const double s_p = detail::best_similarity(query, pos);
  const double s_n = detail::best_similarity(query, neg);
  return ProbeResult{sample.sample_id, decide(s_p, s_n), s_p, s_n, stage, Context::single};
}

inline ProbeResult classify(const EmbeddingStore& store, const BongardSample& sample, Stage stage, Context context,
                            Pooling pooling = Pooling::mean) {
  return context == Context::batched ? classify_batched(store, sample, stage, pooling)
                                     : classify_single(store, sample, stage, pooling);
}

/// Only vision-stage, batched, mean-pooled accuracy is the separability ceiling.
constexpr bool is_lsc(Stage stage, Context context, Pooling pooling) {
  return stage == Stage::vision && context == Context::batched && pooling == Pooling::mean;
}

inline std::string probe_label(Stage stage, Context context, Pooling pooling) {
  if (is_lsc(stage, context, pooling)) return "LSC";
  return "probe:" + std::string(to_string(stage)) + "/" + std::string(to_string(context)) + "/" +
         std::string(to_string(pooling));
}

/// Fraction of correct predictions, with the truth-positive and
/// truth-negative splits attached when both classes occur.
inline AccuracyEstimate accuracy_of(std::string label, const std::vector<ProbeResult>& results,
                                    const std::vector<Label>& truths) {
  std::int64_t correct = 0, pos_n = 0, pos_ok = 0, neg_n = 0, neg_ok = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const bool ok = results[i].predicted == truths[i];
    correct += ok;
    if (truths[i] == Label::positive) {
      ++pos_n;
      pos_ok += ok;
    } else {
      ++neg_n;
      neg_ok += ok;
    }
  }
  auto est = AccuracyEstimate::from_counts(label, correct, static_cast<std::int64_t>(results.size()));
  if (pos_n > 0 && neg_n > 0) {
    est.per_class.push_back(AccuracyEstimate::from_counts(label + ":positive", pos_ok, pos_n));
    est.per_class.push_back(AccuracyEstimate::from_counts(label + ":negative", neg_ok, neg_n));
  }
  return est;
}

struct ProbeRun {
  Stage stage = Stage::vision;
  Context context = Context::batched;
  Pooling pooling = Pooling::mean;
  std::vector<ProbeResult> results;  // sample_id order
  std::vector<Label> truths;         // parallel to results
  AccuracyEstimate accuracy;

  PredictionSet predictions() const {
    PredictionSet set{probe_label(stage, context, pooling), {}};
    for (const auto& r : results) set.predictions.emplace(r.sample_id, r.predicted);
    return set;
  }
};

/// Classifies every sample. A missing embedding aborts the whole run.
/// Results come back sorted by sample_id whatever the worker count.
inline ProbeRun run_probe(const EmbeddingStore& store, std::vector<BongardSample> samples, Stage stage,
                          Context context, Pooling pooling = Pooling::mean, std::size_t workers = 1) {
  if (samples.empty()) throw Error(ErrorKind::EmptySet, "no samples to probe");
  std::sort(samples.begin(), samples.end(),
            [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
  for (std::size_t i = 1; i < samples.size(); ++i)
    if (samples[i].sample_id == samples[i - 1].sample_id)
      throw Error(ErrorKind::DuplicateId, "sample id '" + samples[i].sample_id + "' appears twice");

  ProbeRun run;
  run.stage = stage;
  run.context = context;
  run.pooling = pooling;
  run.results.resize(samples.size());
  detail::parallel_for(samples.size(), workers,
                       [&](std::size_t i) { run.results[i] = classify(store, samples[i], stage, context, pooling); });
  run.truths.reserve(samples.size());
  for (const auto& s : samples) run.truths.push_back(s.truth);
  run.accuracy = accuracy_of(probe_label(stage, context, pooling), run.results, run.truths);
  return run;
}

inline AccuracyEstimate probe_accuracy(const EmbeddingStore& store, const std::vector<BongardSample>& samples,
                                       Stage stage, Context context, Pooling pooling = Pooling::mean) {
  return run_probe(store, samples, stage, context, pooling).accuracy;
}

}  // namespace lsc
