#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lsc/error.hpp"

namespace lsc {

/// Pipeline stage an embedding was taken from: the vision encoder output
/// before any language-model contextualization, or the language model's last
/// hidden layer at the image-token positions.
enum class Stage { vision, final };

enum class Pooling { mean, max };

constexpr std::string_view to_string(Stage s) { return s == Stage::vision ? "vision" : "final"; }
constexpr std::string_view to_string(Pooling p) { return p == Pooling::mean ? "mean" : "max"; }

inline constexpr double kZeroNormThreshold = 1e-12;

/// One image's token-embedding sequence at one stage. Tokens are stored
/// row-major, num_tokens x dim, in double precision.
class EmbeddingRecord {
 public:
  EmbeddingRecord(std::string image_id, Stage stage, std::size_t num_tokens, std::size_t dim,
                  std::vector<double> tokens)
      : image_id_(std::move(image_id)),
        stage_(stage),
        num_tokens_(num_tokens),
        dim_(dim),
        tokens_(std::move(tokens)) {
    if (num_tokens_ == 0 || dim_ == 0)
      throw Error(ErrorKind::InvalidInput, "record '" + image_id_ + "' must have at least one token and dim >= 1");
    if (tokens_.size() != num_tokens_ * dim_)
      throw Error(ErrorKind::DimensionMismatch, "record '" + image_id_ + "' holds " +
                                                    std::to_string(tokens_.size()) + " values, expected " +
                                                    std::to_string(num_tokens_ * dim_));
    for (double x : tokens_)
      if (!std::isfinite(x)) throw Error(ErrorKind::NonFiniteInput, "record '" + image_id_ + "' has NaN/Inf");
  }

  const std::string& image_id() const noexcept { return image_id_; }
  Stage stage() const noexcept { return stage_; }
  std::size_t num_tokens() const noexcept { return num_tokens_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> tokens() const noexcept { return tokens_; }
  std::span<const double> token(std::size_t t) const { return std::span(tokens_).subspan(t * dim_, dim_); }

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;

 private:
  std::string image_id_;
  Stage stage_;
  std::size_t num_tokens_;
  std::size_t dim_;
  std::vector<double> tokens_;
};

/// Unit-norm summary vector of one image.
struct PooledVector {
  std::string image_id;
  Stage stage = Stage::vision;
  std::vector<double> v;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorKind::DimensionMismatch,
                "lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Scales `v` to unit length in place. Throws ZeroVector below 1e-12.
inline void normalize_in_place(std::vector<double>& v) {
  const double n = l2_norm(v);
  if (!(n >= kZeroNormThreshold)) throw Error(ErrorKind::ZeroVector, "norm " + std::to_string(n) + " below 1e-12");
  for (double& x : v) x /= n;
}

inline std::vector<double> normalized(std::vector<double> v) {
  normalize_in_place(v);
  return v;
}

/// Collapses the token axis (elementwise mean or max), then L2-normalizes.
inline PooledVector pool(const EmbeddingRecord& record, Pooling method = Pooling::mean) {
  const std::size_t dim = record.dim();
  const std::size_t n = record.num_tokens();
  std::vector<double> acc(record.token(0).begin(), record.token(0).end());
  for (std::size_t t = 1; t < n; ++t) {
    const auto row = record.token(t);
    if (method == Pooling::mean) {
      for (std::size_t j = 0; j < dim; ++j) acc[j] += row[j];
    } else {
      for (std::size_t j = 0; j < dim; ++j) acc[j] = std::max(acc[j], row[j]);
    }
  }
  if (method == Pooling::mean)
    for (double& x : acc) x /= static_cast<double>(n);
  for (double x : acc)
    if (!std::isfinite(x)) throw Error(ErrorKind::NonFiniteInput, "pooled '" + record.image_id() + "' overflowed");
  try {
    normalize_in_place(acc);
  } catch (const Error&) {
    throw Error(ErrorKind::ZeroVector, "pooled vector of '" + record.image_id() + "' has zero norm");
  }
  return PooledVector{record.image_id(), record.stage(), std::move(acc)};
}

/// a.b / (|a||b|). Both arguments must be non-degenerate.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double ab = dot(a, b);
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (!(na >= kZeroNormThreshold) || !(nb >= kZeroNormThreshold))
    throw Error(ErrorKind::ZeroVector, "cosine of a zero-norm vector");
  return std::clamp(ab / (na * nb), -1.0, 1.0);
}

inline double cosine(const PooledVector& a, std::span<const double> b) { return cosine(a.v, b); }

/// Mean of member vectors, renormalized to unit length.
inline std::vector<double> centroid(std::span<const PooledVector> members) {
  if (members.empty()) throw Error(ErrorKind::EmptySet, "centroid of an empty set");
  const std::size_t dim = members.front().v.size();
  std::vector<double> acc(dim, 0.0);
  for (const auto& m : members) {
    if (m.v.size() != dim)
      throw Error(ErrorKind::DimensionMismatch, "member '" + m.image_id + "' has dim " + std::to_string(m.v.size()) +
                                                    ", expected " + std::to_string(dim));
    for (std::size_t j = 0; j < dim; ++j) acc[j] += m.v[j];
  }
  for (double& x : acc) x /= static_cast<double>(members.size());
  normalize_in_place(acc);
  return acc;
}

/// Keyed by (stage, image_id). Records of one stage share a dim.
class EmbeddingStore {
 public:
  void add(EmbeddingRecord record) {
    const Stage stage = record.stage();
    auto dim_it = dims_.find(stage);
    if (dim_it != dims_.end() && dim_it->second != record.dim())
      throw Error(ErrorKind::DimensionMismatch, std::string(to_string(stage)) + " record '" + record.image_id() +
                                                    "' has dim " + std::to_string(record.dim()) + ", store has " +
                                                    std::to_string(dim_it->second));
    Key key{stage, record.image_id()};
    if (records_.contains(key))
      throw Error(ErrorKind::DuplicateId,
                  "image '" + record.image_id() + "' appears twice at stage " + std::string(to_string(stage)));
    dims_.emplace(stage, record.dim());
    records_.emplace(std::move(key), std::move(record));
  }

  const EmbeddingRecord* find(std::string_view image_id, Stage stage) const {
    auto it = records_.find(Key{stage, std::string(image_id)});
    return it == records_.end() ? nullptr : &it->second;
  }

  const EmbeddingRecord& at(std::string_view image_id, Stage stage) const {
    if (const auto* r = find(image_id, stage)) return *r;
    throw Error(ErrorKind::MissingEmbedding,
                "no " + std::string(to_string(stage)) + " embedding for image '" + std::string(image_id) + "'");
  }

  /// 0 when the stage holds no records.
  std::size_t dim(Stage stage) const {
    auto it = dims_.find(stage);
    return it == dims_.end() ? 0 : it->second;
  }

  std::size_t size() const noexcept { return records_.size(); }

  /// Records of one stage in image_id order.
  std::vector<const EmbeddingRecord*> records(Stage stage) const {
    std::vector<const EmbeddingRecord*> out;
    for (const auto& [key, rec] : records_)
      if (key.first == stage) out.push_back(&rec);
    return out;
  }

  friend bool operator==(const EmbeddingStore&, const EmbeddingStore&) = default;

 private:
  using Key = std::pair<Stage, std::string>;
  std::map<Key, EmbeddingRecord> records_;
  std::map<Stage, std::size_t> dims_;
};

}  // namespace lsc
