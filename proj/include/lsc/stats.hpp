#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lsc/error.hpp"

namespace lsc {

enum class Label { positive, negative };

constexpr Label flip(Label l) { return l == Label::positive ? Label::negative : Label::positive; }
constexpr std::string_view to_string(Label l) { return l == Label::positive ? "positive" : "negative"; }

/// Per-sample binary predictions of one method. nullopt marks an output
/// that could not be parsed into a label.
struct PredictionSet {
  std::string method;
  std::map<std::string, std::optional<Label>> predictions;

  friend bool operator==(const PredictionSet&, const PredictionSet&) = default;
};

// ---------------------------------------------------------------------------
// Proportions and margins of error
// ---------------------------------------------------------------------------

/// Two-sided 95% normal quantile.
inline constexpr double kZ95 = 1.959964;
inline constexpr double kSignificanceLevel = 0.05;

/// Half-width of the Wald 95% interval, z * sqrt(p(1-p)/n).
inline double margin_of_error(double p_hat, std::int64_t n) {
  if (!(p_hat >= 0.0 && p_hat <= 1.0))
    throw Error(ErrorKind::InvalidProportion, "p_hat = " + std::to_string(p_hat) + " outside [0, 1]");
  if (n < 1) throw Error(ErrorKind::NonPositiveN, "n = " + std::to_string(n));
  return kZ95 * std::sqrt(p_hat * (1.0 - p_hat) / static_cast<double>(n));
}

struct AccuracyEstimate {
  std::string label;
  double p_hat = 0.0;
  std::int64_t n = 0;
  double me = 0.0;
  /// Empty, or exactly {truth-positive subset, truth-negative subset}.
  std::vector<AccuracyEstimate> per_class;

  double lower() const noexcept { return p_hat - me; }
  double upper() const noexcept { return p_hat + me; }

  static AccuracyEstimate from_proportion(std::string label, double p_hat, std::int64_t n) {
    const double me = margin_of_error(p_hat, n);
    return AccuracyEstimate{std::move(label), p_hat, n, me, {}};
  }

  static AccuracyEstimate from_counts(std::string label, std::int64_t correct, std::int64_t n) {
    if (n < 1) throw Error(ErrorKind::NonPositiveN, "n = " + std::to_string(n));
    if (correct < 0 || correct > n)
      throw Error(ErrorKind::InvalidProportion, std::to_string(correct) + " correct of " + std::to_string(n));
    return from_proportion(std::move(label), static_cast<double>(correct) / static_cast<double>(n), n);
  }

  friend bool operator==(const AccuracyEstimate&, const AccuracyEstimate&) = default;
};

// ---------------------------------------------------------------------------
// Interval comparison and the performance taxonomy
// ---------------------------------------------------------------------------

enum class ComparisonOutcome { superior, inferior, indistinguishable };

constexpr std::string_view to_string(ComparisonOutcome c) {
  switch (c) {
    case ComparisonOutcome::superior: return "superior";
    case ComparisonOutcome::inferior: return "inferior";
    case ComparisonOutcome::indistinguishable: return "indistinguishable";
  }
  return "?";
}

/// Non-overlapping 95% intervals decide; touching endpoints count as overlap.
inline ComparisonOutcome compare(const AccuracyEstimate& a, const AccuracyEstimate& b) {
  if (a.lower() > b.upper()) return ComparisonOutcome::superior;
  if (b.lower() > a.upper()) return ComparisonOutcome::inferior;
  return ComparisonOutcome::indistinguishable;
}

enum class BottleneckClass { surpassed, linear_reasoning_bottleneck };
enum class Mechanism { representation_refinement, post_representation_reasoning };

constexpr std::string_view to_string(BottleneckClass b) {
  return b == BottleneckClass::surpassed ? "surpassed" : "linear_reasoning_bottleneck";
}
constexpr std::string_view to_string(Mechanism m) {
  return m == Mechanism::representation_refinement ? "representation_refinement" : "post_representation_reasoning";
}

/// A mechanism is only ever attached to `surpassed`.
class TaxonomyLabel {
 public:
  static TaxonomyLabel bottleneck() { return TaxonomyLabel(BottleneckClass::linear_reasoning_bottleneck, {}); }
  static TaxonomyLabel surpassed(Mechanism m) { return TaxonomyLabel(BottleneckClass::surpassed, m); }

  BottleneckClass bottleneck_class() const noexcept { return class_; }
  const std::optional<Mechanism>& mechanism() const noexcept { return mechanism_; }

  std::string to_string() const {
    std::string s(lsc::to_string(class_));
    if (mechanism_) s += " + " + std::string(lsc::to_string(*mechanism_));
    return s;
  }

  friend bool operator==(const TaxonomyLabel&, const TaxonomyLabel&) = default;

 private:
  TaxonomyLabel(BottleneckClass c, std::optional<Mechanism> m) : class_(c), mechanism_(m) {}

  BottleneckClass class_;
  std::optional<Mechanism> mechanism_;
};

/// Taxonomy plus the two raw comparisons it was derived from, so that
/// "indistinguishable" and "inferior" bottlenecks stay distinguishable.
struct Decomposition {
  TaxonomyLabel taxonomy = TaxonomyLabel::bottleneck();
  ComparisonOutcome gen_vs_lsc = ComparisonOutcome::indistinguishable;
  ComparisonOutcome gen_vs_final = ComparisonOutcome::indistinguishable;

  friend bool operator==(const Decomposition&, const Decomposition&) = default;
};

inline Decomposition decompose(const AccuracyEstimate& gen, const AccuracyEstimate& lsc,
                               const AccuracyEstimate& final_acc) {
  if (gen.n != lsc.n || gen.n != final_acc.n)
    throw Error(ErrorKind::MismatchedN, "gen n=" + std::to_string(gen.n) + ", lsc n=" + std::to_string(lsc.n) +
                                            ", final n=" + std::to_string(final_acc.n));
  Decomposition d;
  d.gen_vs_lsc = compare(gen, lsc);
  d.gen_vs_final = compare(gen, final_acc);
  if (d.gen_vs_lsc == ComparisonOutcome::superior) {
    d.taxonomy = TaxonomyLabel::surpassed(d.gen_vs_final == ComparisonOutcome::superior
                                              ? Mechanism::post_representation_reasoning
                                              : Mechanism::representation_refinement);
  }
  return d;
}

inline TaxonomyLabel classify_taxonomy(const AccuracyEstimate& gen, const AccuracyEstimate& lsc,
                                       const AccuracyEstimate& final_acc) {
  return decompose(gen, lsc, final_acc).taxonomy;
}

// ---------------------------------------------------------------------------
// Chi-squared dependence between two prediction sets
// ---------------------------------------------------------------------------

/// counts[probe][gen], index 0 = positive prediction, 1 = negative.
struct ContingencyTable {
  std::array<std::array<std::int64_t, 2>, 2> counts{};

  std::int64_t total() const noexcept { return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1]; }
  std::int64_t row(int i) const noexcept { return counts[i][0] + counts[i][1]; }
  std::int64_t col(int j) const noexcept { return counts[0][j] + counts[1][j]; }

  friend bool operator==(const ContingencyTable&, const ContingencyTable&) = default;
};

enum class Direction { positive, inverse, none };
enum class Continuity { none, yates };

constexpr std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::positive: return "positive";
    case Direction::inverse: return "inverse";
    case Direction::none: return "none";
  }
  return "?";
}

struct DependenceResult {
  double chi2 = 0.0;
  double p_value = 1.0;
  bool significant = false;
  Direction direction = Direction::none;
  ContingencyTable table;
  /// Samples dropped because either prediction was unparseable.
  std::int64_t excluded = 0;

  friend bool operator==(const DependenceResult&, const DependenceResult&) = default;
};

/// Upper tail of the chi-squared distribution with one degree of freedom.
inline double chi2_survival_1dof(double x) {
  if (!(x > 0.0)) return 1.0;
  return std::erfc(std::sqrt(0.5 * x));
}

/// Pearson test on a 2x2 table. A zero marginal yields chi2 = 0, p = 1.
inline DependenceResult chi2_test(const ContingencyTable& table, Continuity correction = Continuity::none) {
  DependenceResult r;
  r.table = table;
  const auto& c = table.counts;
  for (const auto& row : c)
    for (auto v : row)
      if (v < 0) throw Error(ErrorKind::InvalidInput, "negative count in contingency table");
  const double n = static_cast<double>(table.total());
  if (table.row(0) == 0 || table.row(1) == 0 || table.col(0) == 0 || table.col(1) == 0) return r;

  // sum over cells of (|O - E| - correction)^2 / E
  const double shift = correction == Continuity::yates ? 0.5 : 0.0;
  double chi2 = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double expected = static_cast<double>(table.row(i)) * static_cast<double>(table.col(j)) / n;
      const double dev = std::max(0.0, std::abs(static_cast<double>(c[i][j]) - expected) - shift);
      chi2 += dev * dev / expected;
    }
  }
  r.chi2 = chi2;
  r.p_value = chi2_survival_1dof(chi2);
  r.significant = r.p_value < kSignificanceLevel;
  if (r.significant) {
    // odds ratio ad/bc against 1, compared without dividing
    const std::int64_t ad = c[0][0] * c[1][1];
    const std::int64_t bc = c[0][1] * c[1][0];
    r.direction = ad > bc ? Direction::positive : ad < bc ? Direction::inverse : Direction::none;
  }
  return r;
}

inline ContingencyTable cross_tabulate(const PredictionSet& probe, const PredictionSet& gen, std::int64_t* excluded) {
  if (probe.predictions.size() != gen.predictions.size())
    throw Error(ErrorKind::MismatchedSamples, "'" + probe.method + "' covers " +
                                                  std::to_string(probe.predictions.size()) + " samples, '" +
                                                  gen.method + "' covers " + std::to_string(gen.predictions.size()));
  ContingencyTable t;
  std::int64_t dropped = 0;
  auto it = gen.predictions.begin();
  for (const auto& [id, p] : probe.predictions) {
    if (it->first != id)
      throw Error(ErrorKind::MismatchedSamples, "sample '" + id + "' missing from '" + gen.method + "'");
    const auto& g = it->second;
    ++it;
    if (!p || !g) {
      ++dropped;
      continue;
    }
    ++t.counts[*p == Label::positive ? 0 : 1][*g == Label::positive ? 0 : 1];
  }
  if (excluded) *excluded = dropped;
  return t;
}

/// Dependence between probe and generative predictions over the same samples.
inline DependenceResult chi2_dependence(const PredictionSet& probe, const PredictionSet& gen,
                                        Continuity correction = Continuity::none) {
  std::int64_t excluded = 0;
  const auto table = cross_tabulate(probe, gen, &excluded);
  auto r = chi2_test(table, correction);
  r.excluded = excluded;
  return r;
}

}  // namespace lsc
