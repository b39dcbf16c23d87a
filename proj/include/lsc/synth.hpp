#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "lsc/embedding.hpp"
#include "lsc/error.hpp"
#include "lsc/parallel.hpp"
#include "lsc/probe.hpp"
#include "lsc/rng.hpp"
#include "lsc/stats.hpp"

namespace lsc {

/// How final-stage embeddings are derived from vision-stage ones.
enum class FinalTransform {
  identity,
  rotation,  // one global random orthogonal matrix
  collapse,  // project out each sample's class-separating direction
};

constexpr std::string_view to_string(FinalTransform t) {
  switch (t) {
    case FinalTransform::identity: return "identity";
    case FinalTransform::rotation: return "rotation";
    case FinalTransform::collapse: return "collapse";
  }
  return "?";
}

struct SynthConfig {
  std::uint64_t seed = 42;
  std::size_t dim = 16;
  std::size_t num_samples = 500;
  std::size_t k = 6;
  /// Chord distance between the two class directions, in units of the
  /// per-coordinate within-class standard deviation 1/sqrt(dim).
  double separation = 2.0;
  /// Probability that the simulated generative answer copies the vision probe.
  double gen_agreement = 0.5;
  /// When not copying, answer the opposite of the probe instead of a coin flip.
  bool flip_to_inverse = false;
  /// When not copying, probability of answering with the ground truth
  /// (checked before the coin flip / inversion).
  double gen_truth_rate = 0.0;
  std::size_t tokens_per_image = 4;
  /// Token noise relative to the image-level noise.
  double token_noise = 1.0;
  FinalTransform final_transform = FinalTransform::identity;
  /// Fraction of the separating component removed by `collapse`.
  double collapse_strength = 1.0;
  std::string dataset_name = "synthetic";
  std::string gen_method = "gen";

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

inline void validate(const SynthConfig& c) {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); };
  if (c.dim < 2) fail("dim must be >= 2");
  if (c.num_samples < 1) fail("num_samples must be >= 1");
  if (c.k < 1) fail("k must be >= 1");
  if (c.tokens_per_image < 1) fail("tokens_per_image must be >= 1");
  if (!(c.separation >= 0.0) || !std::isfinite(c.separation)) fail("separation must be finite and >= 0");
  if (!(c.gen_agreement >= 0.0 && c.gen_agreement <= 1.0)) fail("gen_agreement must lie in [0, 1]");
  if (!(c.gen_truth_rate >= 0.0 && c.gen_truth_rate <= 1.0)) fail("gen_truth_rate must lie in [0, 1]");
  if (!(c.token_noise >= 0.0) || !std::isfinite(c.token_noise)) fail("token_noise must be finite and >= 0");
  if (!(c.collapse_strength >= 0.0 && c.collapse_strength <= 1.0)) fail("collapse_strength must lie in [0, 1]");
  if (c.gen_method.empty()) fail("gen_method must be non-empty");
}

struct SynthDataset {
  SynthConfig config;
  EmbeddingStore store;
  std::vector<BongardSample> samples;  // sample_id order
  PredictionSet gen_predictions;
  /// Approximate accuracy of the rule that knows both class directions
  /// (planar Gaussian approximation, ignores the sphere projection).
  double bayes_accuracy = 0.5;
};

// ---------------------------------------------------------------------------
// Brute-force oracle. Deliberately shares no code with embedding/probe.
// ---------------------------------------------------------------------------

namespace oracle {

inline std::vector<double> mean_token_unit(const EmbeddingRecord& r) {
  const std::size_t n = r.num_tokens(), d = r.dim();
  const auto raw = r.tokens();
  std::vector<double> out(d, 0.0);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t j = 0; j < d; ++j) out[j] += raw[t * d + j];
  double ss = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    out[j] /= static_cast<double>(n);
    ss += out[j] * out[j];
  }
  const double len = std::sqrt(ss);
  for (std::size_t j = 0; j < d; ++j) out[j] /= len;
  return out;
}

inline double cos_sim(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    ab += a[j] * b[j];
    aa += a[j] * a[j];
    bb += b[j] * b[j];
  }
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

inline std::vector<double> prototype(const EmbeddingStore& store, const std::vector<std::string>& ids, Stage stage) {
  std::vector<double> sum;
  for (const auto& id : ids) {
    const auto v = mean_token_unit(store.at(id, stage));
    if (sum.empty()) sum.assign(v.size(), 0.0);
    for (std::size_t j = 0; j < v.size(); ++j) sum[j] += v[j];
  }
  double ss = 0.0;
  for (double& x : sum) {
    x /= static_cast<double>(ids.size());
    ss += x * x;
  }
  for (double& x : sum) x /= std::sqrt(ss);
  return sum;
}

/// Nearest-centroid decision for one sample, ties to positive.
inline Label predict(const EmbeddingStore& store, const BongardSample& s, Stage stage) {
  const auto q = mean_token_unit(store.at(s.query, stage));
  const double sp = cos_sim(q, prototype(store, s.positives, stage));
  const double sn = cos_sim(q, prototype(store, s.negatives, stage));
  return sp >= sn ? Label::positive : Label::negative;
}

}  // namespace oracle

inline double oracle_nearest_centroid(const EmbeddingStore& store, const std::vector<BongardSample>& samples,
                                      Stage stage) {
  std::size_t correct = 0;
  for (const auto& s : samples) correct += oracle::predict(store, s, stage) == s.truth;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

inline double oracle_nearest_centroid(const SynthDataset& ds, Stage stage) {
  return oracle_nearest_centroid(ds.store, ds.samples, stage);
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

namespace synth_detail {

// Stream slots; image slots are 0..2k (positives, negatives, query).
inline constexpr std::uint64_t kDirectionSlot = 1ULL << 40;
inline constexpr std::uint64_t kGenSlot = (1ULL << 40) + 1;
inline constexpr std::uint64_t kLatentToken = 1ULL << 40;
inline constexpr std::uint64_t kGlobalSample = ~0ULL;

inline std::string sample_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%05zu", i);
  return buf;
}

inline std::vector<double> gaussian(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  return v;
}

inline void orthogonalize_against(std::vector<double>& v, const std::vector<double>& unit) {
  double d = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j) d += v[j] * unit[j];
  for (std::size_t j = 0; j < v.size(); ++j) v[j] -= d * unit[j];
}

/// Random orthogonal matrix (row-major) by Gram-Schmidt on Gaussian rows.
inline std::vector<double> random_rotation(std::uint64_t seed, std::size_t dim) {
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < dim; ++r) {
    Rng rng = Rng::stream(seed, kGlobalSample, r);
    std::vector<double> v;
    do {
      v = gaussian(rng, dim);
      for (const auto& prev : rows) orthogonalize_against(v, prev);
    } while (l2_norm(v) < 1e-6);
    rows.push_back(normalized(std::move(v)));
  }
  std::vector<double> m;
  m.reserve(dim * dim);
  for (const auto& r : rows) m.insert(m.end(), r.begin(), r.end());
  return m;
}

inline double round_to_float(double x) { return static_cast<double>(static_cast<float>(x)); }

struct SampleOutput {
  BongardSample sample;
  std::vector<EmbeddingRecord> records;
};

inline SampleOutput generate_sample(const SynthConfig& c, std::size_t i, const std::vector<double>& rotation) {
  const std::size_t dim = c.dim;
  const double sigma = 1.0 / std::sqrt(static_cast<double>(dim));
  const double sigma_tok = sigma * c.token_noise;

  Rng dir_rng = Rng::stream(c.seed, i, kDirectionSlot);
  std::vector<double> base, sep;
  do {
    base = gaussian(dir_rng, dim);
  } while (l2_norm(base) < 1e-6);
  normalize_in_place(base);
  do {
    sep = gaussian(dir_rng, dim);
    orthogonalize_against(sep, base);
  } while (l2_norm(sep) < 1e-6);
  normalize_in_place(sep);

  const double chord = std::min(c.separation * sigma, 2.0);
  const double half_angle = std::asin(chord / 2.0);
  std::vector<double> mu_pos(dim), mu_neg(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    mu_pos[j] = std::cos(half_angle) * base[j] + std::sin(half_angle) * sep[j];
    mu_neg[j] = std::cos(half_angle) * base[j] - std::sin(half_angle) * sep[j];
  }

  SampleOutput out;
  BongardSample& s = out.sample;
  s.sample_id = sample_name(i);
  s.truth = i % 2 == 0 ? Label::positive : Label::negative;

  auto make_image = [&](std::uint64_t slot, const std::vector<double>& mu, const std::string& id) {
    Rng latent_rng = Rng::stream(c.seed, i, slot, kLatentToken);
    std::vector<double> latent(dim);
    do {
      for (std::size_t j = 0; j < dim; ++j) latent[j] = mu[j] + sigma * latent_rng.normal();
    } while (l2_norm(latent) < 1e-6);
    normalize_in_place(latent);  // image latents live on the unit sphere

    const std::size_t n_tok = c.tokens_per_image;
    std::vector<double> vision(n_tok * dim), final(n_tok * dim);
    for (std::size_t t = 0; t < n_tok; ++t) {
      Rng tok_rng = Rng::stream(c.seed, i, slot, t);
      std::vector<double> tok(dim);
      for (std::size_t j = 0; j < dim; ++j) tok[j] = latent[j] + sigma_tok * tok_rng.normal();

      std::vector<double> fin(dim);
      switch (c.final_transform) {
        case FinalTransform::identity:
          fin = tok;
          break;
        case FinalTransform::rotation:
          for (std::size_t r = 0; r < dim; ++r) {
            double acc = 0.0;
            for (std::size_t j = 0; j < dim; ++j) acc += rotation[r * dim + j] * tok[j];
            fin[r] = acc;
          }
          break;
        case FinalTransform::collapse: {
          double along = 0.0;
          for (std::size_t j = 0; j < dim; ++j) along += tok[j] * sep[j];
          for (std::size_t j = 0; j < dim; ++j) fin[j] = tok[j] - c.collapse_strength * along * sep[j];
          break;
        }
      }
      for (std::size_t j = 0; j < dim; ++j) {
        vision[t * dim + j] = round_to_float(tok[j]);
        final[t * dim + j] = round_to_float(fin[j]);
      }
    }
    out.records.emplace_back(id, Stage::vision, n_tok, dim, std::move(vision));
    out.records.emplace_back(id, Stage::final, n_tok, dim, std::move(final));
  };

  for (std::size_t j = 0; j < c.k; ++j) {
    s.positives.push_back(s.sample_id + "_p" + std::to_string(j));
    make_image(j, mu_pos, s.positives.back());
  }
  for (std::size_t j = 0; j < c.k; ++j) {
    s.negatives.push_back(s.sample_id + "_n" + std::to_string(j));
    make_image(c.k + j, mu_neg, s.negatives.back());
  }
  s.query = s.sample_id + "_q";
  make_image(2 * c.k, s.truth == Label::positive ? mu_pos : mu_neg, s.query);
  return out;
}

}  // namespace synth_detail

/// Deterministic in the config; the worker count only changes speed.
inline SynthDataset generate(const SynthConfig& config, std::size_t workers = 1) {
  validate(config);
  namespace sd = synth_detail;
  std::vector<double> rotation;
  if (config.final_transform == FinalTransform::rotation) rotation = sd::random_rotation(config.seed, config.dim);

  std::vector<sd::SampleOutput> parts(config.num_samples);
  detail::parallel_for(config.num_samples, workers,
                       [&](std::size_t i) { parts[i] = sd::generate_sample(config, i, rotation); });

  SynthDataset ds;
  ds.config = config;
  for (auto& part : parts) {
    for (auto& rec : part.records) ds.store.add(std::move(rec));
    ds.samples.push_back(std::move(part.sample));
  }

  // Simulated generative answers, keyed off the vision-stage probe decision.
  ds.gen_predictions.method = config.gen_method;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    const Label probe = oracle::predict(ds.store, s, Stage::vision);
    Rng rng = Rng::stream(config.seed, i, sd::kGenSlot);
    Label answer;
    if (rng.bernoulli(config.gen_agreement)) {
      answer = probe;
    } else if (rng.bernoulli(config.gen_truth_rate)) {
      answer = s.truth;
    } else if (config.flip_to_inverse) {
      answer = flip(probe);
    } else {
      answer = rng.bernoulli(0.5) ? Label::positive : Label::negative;
    }
    ds.gen_predictions.predictions.emplace(s.sample_id, answer);
  }

  const double sigma = 1.0 / std::sqrt(static_cast<double>(config.dim));
  const double sigma_eff = sigma * std::sqrt(1.0 + config.token_noise * config.token_noise /
                                                       static_cast<double>(config.tokens_per_image));
  const double chord = std::min(config.separation * sigma, 2.0);
  ds.bayes_accuracy = 0.5 * std::erfc(-chord / (2.0 * sigma_eff) / std::sqrt(2.0));
  return ds;
}

}  // namespace lsc
