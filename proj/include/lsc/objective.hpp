#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lsc/embedding.hpp"
#include "lsc/error.hpp"
#include "lsc/rng.hpp"
#include "lsc/stats.hpp"

namespace lsc {

inline constexpr double kDefaultTemperature = 0.07;

// Scale factors C for the cosine weight schedule that worked best per model.
inline constexpr double kScalePhi = 0.4;
inline constexpr double kScaleGemma3 = 0.4;
inline constexpr double kScalePixtral = 1.6;

/// Inputs of the combined objective for one query. y = positive selects the
/// first logit (s_p), y = negative the second.
struct LossTerms {
  double s_p = 0.0;
  double s_n = 0.0;
  double tau = kDefaultTemperature;
  Label y = Label::positive;
  double l_nt = 0.0;
  double w_n = 1.0;
  double w_c = 0.0;
};

namespace detail {

inline void check_temperature(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw Error(ErrorKind::InvalidTemperature, "tau = " + std::to_string(tau));
}

/// -log softmax([a, b])[0] with the larger logit subtracted first.
inline double softplus_gap(double target_logit, double other_logit) {
  const double d = other_logit - target_logit;
  return d > 0.0 ? d + std::log1p(std::exp(-d)) : std::log1p(std::exp(d));
}

}  // namespace detail

/// Two-way cross-entropy over [s_p / tau, s_n / tau].
inline double sim_loss(const LossTerms& t) {
  detail::check_temperature(t.tau);
  constexpr double slack = 1e-12;
  if (!(std::abs(t.s_p) <= 1.0 + slack) || !(std::abs(t.s_n) <= 1.0 + slack))
    throw Error(ErrorKind::InvalidInput, "similarities must lie in [-1, 1]");
  const double zp = t.s_p / t.tau;
  const double zn = t.s_n / t.tau;
  return t.y == Label::positive ? detail::softplus_gap(zp, zn) : detail::softplus_gap(zn, zp);
}

/// w_n * l_nt + w_c * sim_loss.
inline double combined_loss(const LossTerms& t) {
  if (!(t.l_nt >= 0.0) || !(t.w_n >= 0.0) || !(t.w_c >= 0.0) || !std::isfinite(t.l_nt) || !std::isfinite(t.w_n) ||
      !std::isfinite(t.w_c))
    throw Error(ErrorKind::InvalidInput, "l_nt, w_n and w_c must be finite and non-negative");
  const double sim = sim_loss(t);
  if (t.w_c == 0.0) return t.w_n * t.l_nt;
  return t.w_n * t.l_nt + t.w_c * sim;
}

// ---------------------------------------------------------------------------
// Similarity loss through the centroid construction, with gradients
// ---------------------------------------------------------------------------

/// The query embedding and the member embeddings of both example sets.
struct CentroidLossInput {
  std::vector<double> query;
  std::vector<std::vector<double>> positives;
  std::vector<std::vector<double>> negatives;
  double tau = kDefaultTemperature;
  Label y = Label::positive;
};

struct CentroidLossGradient {
  double loss = 0.0;
  double s_p = 0.0;
  double s_n = 0.0;
  std::vector<double> d_query;
  std::vector<std::vector<double>> d_positives;
  std::vector<std::vector<double>> d_negatives;
};

namespace detail {

inline std::vector<PooledVector> as_members(const std::vector<std::vector<double>>& vs) {
  std::vector<PooledVector> out;
  out.reserve(vs.size());
  for (const auto& v : vs) out.push_back(PooledVector{{}, Stage::final, v});
  return out;
}

}  // namespace detail

/// Forward pass: member mean -> renormalize -> cosine with the query ->
/// sim_loss. Built from the same primitives the probe uses.
inline double centroid_sim_loss(const CentroidLossInput& in) {
  const auto c_p = centroid(detail::as_members(in.positives));
  const auto c_n = centroid(detail::as_members(in.negatives));
  return sim_loss(LossTerms{cosine(in.query, c_p), cosine(in.query, c_n), in.tau, in.y});
}

/// Closed-form gradient of centroid_sim_loss with respect to the query and
/// every member vector.
///
/// With q^ = q/|q|, m = mean of a set, c = m/|m| and s = q^.c:
///   ds/dq   = (c - s q^) / |q|
///   ds/dx_i = (q^ - s c) / (k |m|)       for each of the k members x_i
///   dL/ds_p = (softmax_p - [y = positive]) / tau, likewise for s_n.
inline CentroidLossGradient centroid_sim_loss_grad(const CentroidLossInput& in) {
  detail::check_temperature(in.tau);
  if (in.positives.empty() || in.negatives.empty())
    throw Error(ErrorKind::EmptySet, "both member sets must be non-empty");
  const std::size_t dim = in.query.size();

  const double q_norm = l2_norm(in.query);
  if (!(q_norm >= kZeroNormThreshold)) throw Error(ErrorKind::ZeroVector, "query has zero norm");
  std::vector<double> q_hat(in.query);
  for (double& x : q_hat) x /= q_norm;

  struct SetState {
    std::vector<double> c;
    double mean_norm = 0.0;
    double s = 0.0;
  };
  auto summarize = [&](const std::vector<std::vector<double>>& members) {
    SetState st;
    std::vector<double> m(dim, 0.0);
    for (const auto& x : members) {
      if (x.size() != dim) throw Error(ErrorKind::DimensionMismatch, "member dim differs from query dim");
      for (std::size_t j = 0; j < dim; ++j) m[j] += x[j];
    }
    for (double& v : m) v /= static_cast<double>(members.size());
    st.mean_norm = l2_norm(m);
    if (!(st.mean_norm >= kZeroNormThreshold)) throw Error(ErrorKind::ZeroVector, "member mean has zero norm");
    st.c = std::move(m);
    for (double& v : st.c) v /= st.mean_norm;
    st.s = dot(q_hat, st.c);
    return st;
  };
  const SetState pos = summarize(in.positives);
  const SetState neg = summarize(in.negatives);

  CentroidLossGradient g;
  g.s_p = pos.s;
  g.s_n = neg.s;
  g.loss = sim_loss(LossTerms{std::clamp(pos.s, -1.0, 1.0), std::clamp(neg.s, -1.0, 1.0), in.tau, in.y});

  // softmax over the two logits, computed from the larger one
  const double zp = pos.s / in.tau;
  const double zn = neg.s / in.tau;
  const double zmax = std::max(zp, zn);
  const double ep = std::exp(zp - zmax);
  const double en = std::exp(zn - zmax);
  const double prob_p = ep / (ep + en);
  const double prob_n = en / (ep + en);
  const double dl_dsp = (prob_p - (in.y == Label::positive ? 1.0 : 0.0)) / in.tau;
  const double dl_dsn = (prob_n - (in.y == Label::negative ? 1.0 : 0.0)) / in.tau;

  g.d_query.assign(dim, 0.0);
  for (std::size_t j = 0; j < dim; ++j)
    g.d_query[j] = (dl_dsp * (pos.c[j] - pos.s * q_hat[j]) + dl_dsn * (neg.c[j] - neg.s * q_hat[j])) / q_norm;

  auto member_grads = [&](const SetState& st, double dl_ds, std::size_t k) {
    std::vector<double> per(dim);
    const double scale = dl_ds / (static_cast<double>(k) * st.mean_norm);
    for (std::size_t j = 0; j < dim; ++j) per[j] = scale * (q_hat[j] - st.s * st.c[j]);
    return std::vector<std::vector<double>>(k, per);
  };
  g.d_positives = member_grads(pos, dl_dsp, in.positives.size());
  g.d_negatives = member_grads(neg, dl_dsn, in.negatives.size());
  return g;
}

/// Convenience form taking the query and members separately.
inline CentroidLossGradient sim_loss_grad(std::span<const double> query,
                                          const std::vector<std::vector<double>>& positives,
                                          const std::vector<std::vector<double>>& negatives,
                                          double tau = kDefaultTemperature, Label y = Label::positive) {
  return centroid_sim_loss_grad(
      CentroidLossInput{std::vector<double>(query.begin(), query.end()), positives, negatives, tau, y});
}

// ---------------------------------------------------------------------------
// Finite-difference check
// ---------------------------------------------------------------------------

struct GradCheckResult {
  /// Worst block-wise |analytic - numeric| / max(|analytic|, |numeric|),
  /// taken over the query gradient and every member gradient.
  double max_relative_error = 0.0;
  std::size_t blocks = 0;
};

/// Relative error of one gradient block. Blocks whose norms are both below
/// `floor` are compared absolutely.
inline double block_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                                   double floor = 1e-10) {
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double d = analytic[i] - numeric[i];
    diff2 += d * d;
    a2 += analytic[i] * analytic[i];
    n2 += numeric[i] * numeric[i];
  }
  const double denom = std::max({std::sqrt(a2), std::sqrt(n2), floor});
  return std::sqrt(diff2) / denom;
}

/// Central differences of centroid_sim_loss with step h over every input
/// coordinate, compared with centroid_sim_loss_grad.
inline GradCheckResult check_gradient(const CentroidLossInput& input, double h = 1e-5) {
  const auto analytic = centroid_sim_loss_grad(input);
  CentroidLossInput probe = input;

  auto numeric_block = [&](std::vector<double>& target) {
    std::vector<double> out(target.size());
    for (std::size_t j = 0; j < target.size(); ++j) {
      const double saved = target[j];
      target[j] = saved + h;
      const double up = centroid_sim_loss(probe);
      target[j] = saved - h;
      const double down = centroid_sim_loss(probe);
      target[j] = saved;
      out[j] = (up - down) / (2.0 * h);
    }
    return out;
  };

  GradCheckResult r;
  auto record = [&](std::span<const double> a, std::span<const double> n) {
    r.max_relative_error = std::max(r.max_relative_error, block_relative_error(a, n));
    ++r.blocks;
  };
  record(analytic.d_query, numeric_block(probe.query));
  for (std::size_t i = 0; i < probe.positives.size(); ++i)
    record(analytic.d_positives[i], numeric_block(probe.positives[i]));
  for (std::size_t i = 0; i < probe.negatives.size(); ++i)
    record(analytic.d_negatives[i], numeric_block(probe.negatives[i]));
  return r;
}

inline std::vector<double> random_unit_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  do {
    for (double& x : v) x = rng.normal();
  } while (l2_norm(v) < 1e-6);
  return normalized(std::move(v));
}

/// Random unit-norm instance: dim in [4, 64], 1 to 6 members per set.
inline CentroidLossInput random_instance(Rng& rng, double tau = kDefaultTemperature) {
  const std::size_t dim = 4 + static_cast<std::size_t>(rng.next_u64() % 61);
  const std::size_t k_pos = 1 + static_cast<std::size_t>(rng.next_u64() % 6);
  const std::size_t k_neg = 1 + static_cast<std::size_t>(rng.next_u64() % 6);
  CentroidLossInput in;
  in.tau = tau;
  in.y = rng.bernoulli(0.5) ? Label::positive : Label::negative;
  in.query = random_unit_vector(rng, dim);
  for (std::size_t i = 0; i < k_pos; ++i) in.positives.push_back(random_unit_vector(rng, dim));
  for (std::size_t i = 0; i < k_neg; ++i) in.negatives.push_back(random_unit_vector(rng, dim));
  return in;
}

struct GradCheckSummary {
  std::size_t trials = 0;
  double max_relative_error = 0.0;
  std::size_t worst_trial = 0;
  bool passed = false;
};

/// Runs `trials` random instances from `seed` and reports the worst error
/// against `tolerance`.
inline GradCheckSummary run_gradcheck(std::size_t trials, std::uint64_t seed, double h = 1e-5,
                                      double tolerance = 1e-5) {
  GradCheckSummary s;
  s.trials = trials;
  Rng rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto r = check_gradient(random_instance(rng), h);
    if (t == 0 || r.max_relative_error > s.max_relative_error) {
      s.max_relative_error = r.max_relative_error;
      s.worst_trial = t;
    }
  }
  s.passed = s.max_relative_error < tolerance;
  return s;
}

// ---------------------------------------------------------------------------
// Loss-weight schedules
// ---------------------------------------------------------------------------

enum class ScheduleKind { constant, linear, cosine };

constexpr std::string_view to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::cosine: return "cosine";
  }
  return "?";
}

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::cosine;
  /// Constant weight or linear target for w_c; the scale C for cosine.
  double target_or_c = kScalePhi;
  std::int64_t total_steps = 1;
};

struct LossWeights {
  double w_n = 1.0;
  double w_c = 0.0;
};

/// Training progress p = (step + 1) / total_steps, so step 0 is already past 0.
inline double schedule_progress(const ScheduleConfig& config, std::int64_t step) {
  if (config.total_steps < 1) throw Error(ErrorKind::InvalidInput, "total_steps must be >= 1");
  if (step < 0 || step >= config.total_steps)
    throw Error(ErrorKind::StepOutOfRange,
                "step " + std::to_string(step) + " outside [0, " + std::to_string(config.total_steps) + ")");
  return static_cast<double>(step + 1) / static_cast<double>(config.total_steps);
}

/// cos(pi/2 * p) written as sin(pi/2 * (1 - p)) so p = 1 gives exactly 0.
inline double cos_quarter_turn(double p) { return std::sin(0.5 * std::numbers::pi * (1.0 - p)); }

inline LossWeights schedule_weights(const ScheduleConfig& config, std::int64_t step) {
  if (!(config.target_or_c >= 0.0) || !std::isfinite(config.target_or_c))
    throw Error(ErrorKind::InvalidInput, "schedule target must be finite and non-negative");
  const double p = schedule_progress(config, step);
  switch (config.kind) {
    case ScheduleKind::constant:
      return {1.0, config.target_or_c};
    case ScheduleKind::linear:
      return {1.0, p * config.target_or_c};
    case ScheduleKind::cosine: {
      const double decay = cos_quarter_turn(p);
      return {1.0 - decay, decay * std::min(2.0 * p, 1.0) * config.target_or_c};
    }
  }
  return {};
}

}  // namespace lsc
