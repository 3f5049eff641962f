#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ita/error.hpp"
#include "ita/image.hpp"

namespace ita {

struct EmbeddingVector {
  std::vector<float> values;
  bool normalized = false;

  std::size_t dim() const { return values.size(); }

  double norm() const {
    double s = 0.0;
    for (float v : values) s += static_cast<double>(v) * v;
    return std::sqrt(s);
  }

  /// Returns a unit-norm copy; zero vectors are rejected.
  EmbeddingVector unit() const {
    const double n = norm();
    if (n == 0.0) throw Error(ErrorKind::kUndefinedSimilarity, "cannot normalize a zero vector");
    EmbeddingVector out;
    out.values.reserve(values.size());
    for (float v : values) out.values.push_back(static_cast<float>(v / n));
    out.normalized = true;
    return out;
  }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

/// Cosine similarity, accumulated in double and clamped to [-1, 1].
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "cosine of dims " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double x = a.values[i];
    const double y = b.values[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) {
    throw Error(ErrorKind::kUndefinedSimilarity, "cosine with a zero vector");
  }
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

enum class BackendKind { kSyntheticBound, kSyntheticBag, kRemoteHttp };

inline std::string to_string(BackendKind k) {
  switch (k) {
    case BackendKind::kSyntheticBound: return "synthetic_bound";
    case BackendKind::kSyntheticBag: return "synthetic_bag";
    case BackendKind::kRemoteHttp: return "remote_http";
  }
  return "unknown";
}

struct BackendDescriptor {
  std::string backend_id;
  BackendKind kind = BackendKind::kSyntheticBound;
  std::size_t dim = 0;
  // Side the harness resamples crops to before embedding; 0 means crops are
  // passed at native resolution.
  int input_side = 0;
  std::string version;
};

/// Provider of image and text embeddings. Implementations must be safe for
/// concurrent calls. Image inputs arrive already preprocessed.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual const BackendDescriptor& descriptor() const = 0;
  virtual std::vector<EmbeddingVector> embed_image_batch(std::span<const PixelBuffer> images) = 0;
  virtual std::vector<EmbeddingVector> embed_text_batch(std::span<const std::string> texts) = 0;
  /// Largest batch a single dispatch may carry.
  virtual std::size_t max_batch() const { return 64; }
};

}  // namespace ita
