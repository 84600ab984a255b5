#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "r3/error.hpp"
#include "r3/rng.hpp"
#include "r3/text_metrics.hpp"

namespace r3 {

struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
  bool is_zero() const {
    for (float v : values)
      if (v != 0.0f) return false;
    return true;
  }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

enum class EmbedderKind { kBuiltinHashed, kRemote };

struct EmbedderDescriptor {
  EmbedderKind kind = EmbedderKind::kBuiltinHashed;
  std::size_t dim = 1024;
  std::optional<std::string> endpoint;
  bool normalize = true;
  // Remote only.
  std::size_t max_batch = 64;
  std::size_t parallelism = 8;
  double timeout_seconds = 30.0;

  void validate() const {
    if (dim == 0) throw Error(ErrorCode::kConfig, "embedder.dim must be positive");
    if (kind == EmbedderKind::kRemote && (!endpoint || endpoint->empty()))
      throw Error(ErrorCode::kConfig, "embedder.endpoint is required for the remote embedder");
    if (max_batch == 0 || parallelism == 0)
      throw Error(ErrorCode::kConfig, "embedder.max_batch and embedder.parallelism must be positive");
  }
};

/// M(.): maps texts to fixed-dimension vectors. Implementations are immutable
/// after construction and safe to share across threads.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const = 0;

  EmbeddingVector embed_one(std::string_view text) const {
    std::string owned(text);
    auto out = embed(std::span<const std::string>(&owned, 1));
    return std::move(out.front());
  }
};

/// Deterministic lexical embedder: hashed unigram ("1:w") and bigram
/// ("2:w1 w2") counts, FNV-1a 64 mod dim, L2-normalized.
class HashedEmbedder final : public Embedder {
 public:
  explicit HashedEmbedder(std::size_t dim = 1024, bool normalize = true)
      : dim_(dim), normalize_(normalize) {
    if (dim_ == 0) throw Error(ErrorCode::kConfig, "embedder.dim must be positive");
  }

  std::size_t dim() const override { return dim_; }

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_words(text::words_of(t)));
    return out;
  }

  EmbeddingVector embed_words(const std::vector<std::string>& words) const {
    std::vector<double> acc(dim_, 0.0);
    std::string feature;
    for (std::size_t i = 0; i < words.size(); ++i) {
      feature.assign("1:").append(words[i]);
      acc[fnv1a64(feature) % dim_] += 1.0;
      if (i + 1 < words.size()) {
        feature.assign("2:").append(words[i]).append(" ").append(words[i + 1]);
        acc[fnv1a64(feature) % dim_] += 1.0;
      }
    }
    double scale = 1.0;
    if (normalize_) {
      double sq = 0.0;
      for (double v : acc) sq += v * v;
      scale = sq > 0.0 ? 1.0 / std::sqrt(sq) : 0.0;
    }
    EmbeddingVector v;
    v.values.resize(dim_);
    for (std::size_t i = 0; i < dim_; ++i) v.values[i] = static_cast<float>(acc[i] * scale);
    return v;
  }

 private:
  std::size_t dim_;
  bool normalize_;
};

enum class ScoreMode { kInnerProduct, kCosine };

/// Relevance between two embeddings: raw inner product by default. Cosine
/// re-normalizes and exists for comparison runs.
inline double relevance_score(const EmbeddingVector& a, const EmbeddingVector& b,
                              ScoreMode mode = ScoreMode::kInnerProduct) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "embedding dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                    std::to_string(b.dim()));
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i)
    dot += static_cast<double>(a.values[i]) * static_cast<double>(b.values[i]);
  if (mode == ScoreMode::kInnerProduct) return dot;
  double na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    na += static_cast<double>(a.values[i]) * a.values[i];
    nb += static_cast<double>(b.values[i]) * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace r3
