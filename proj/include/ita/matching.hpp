#pragma once

// Crop x segment similarity matrix, per-segment argmax matches and the mean
// aggregate.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ita/embedder.hpp"
#include "ita/embedding.hpp"
#include "ita/error.hpp"
#include "ita/geometry.hpp"
#include "ita/image.hpp"
#include "ita/textseg.hpp"

namespace ita {

/// Rows are crops, columns are segments.
struct SimilarityMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major
  std::vector<CropBox> crop_index;
  std::vector<std::string> segment_index;

  double at(std::size_t crop, std::size_t segment) const { return values[crop * cols + segment]; }
  double& at(std::size_t crop, std::size_t segment) { return values[crop * cols + segment]; }
};

struct Match {
  std::size_t segment = 0;
  std::size_t crop = 0;
  double similarity = 0.0;
};

struct MatchReport {
  std::vector<Match> matches;
  double ita_score = 0.0;
  std::optional<double> baseline_score;
  // Copied from the matrix for dumps.
  std::vector<std::string> segments;
  std::vector<CropBox> crops;
};

/// Crop and segment labels are optional; when given they must align with the
/// vector lists.
inline SimilarityMatrix similarity_matrix(std::span<const EmbeddingVector> crop_vecs,
                                          std::span<const EmbeddingVector> segment_vecs,
                                          std::vector<CropBox> crop_index = {},
                                          std::vector<std::string> segment_index = {}) {
  if (crop_vecs.empty() || segment_vecs.empty()) {
    throw Error(ErrorKind::kEmptyInput, "similarity matrix needs at least one crop and one segment");
  }
  if ((!crop_index.empty() && crop_index.size() != crop_vecs.size()) ||
      (!segment_index.empty() && segment_index.size() != segment_vecs.size())) {
    throw Error(ErrorKind::kDimensionMismatch, "index lists do not match vector lists");
  }
  SimilarityMatrix m;
  m.rows = crop_vecs.size();
  m.cols = segment_vecs.size();
  m.values.resize(m.rows * m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) m.at(i, j) = cosine(crop_vecs[i], segment_vecs[j]);
  }
  m.crop_index = std::move(crop_index);
  m.segment_index = std::move(segment_index);
  return m;
}

/// Mean that does not depend on input order: values are summed in ascending
/// order, and the result is clamped to [min, max] against rounding drift.
inline double order_free_mean(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorKind::kEmptyInput, "mean of nothing");
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return std::clamp(sum / static_cast<double>(values.size()), values.front(), values.back());
}

/// Per-segment argmax over crops; ties go to the lowest crop index.
inline MatchReport best_matches(const SimilarityMatrix& m) {
  if (m.rows == 0 || m.cols == 0) throw Error(ErrorKind::kEmptyInput, "empty similarity matrix");
  MatchReport r;
  std::vector<double> sims;
  sims.reserve(m.cols);
  for (std::size_t j = 0; j < m.cols; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < m.rows; ++i) {
      if (m.at(i, j) > m.at(best, j)) best = i;
    }
    r.matches.push_back({j, best, m.at(best, j)});
    sims.push_back(m.at(best, j));
  }
  r.ita_score = order_free_mean(std::move(sims));
  r.segments = m.segment_index;
  r.crops = m.crop_index;
  return r;
}

inline nlohmann::json to_json(const CropBox& b) {
  return {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}};
}

inline nlohmann::json match_dump(const MatchReport& r) {
  nlohmann::json matches = nlohmann::json::array();
  for (const auto& m : r.matches) {
    nlohmann::json j{{"segment", m.segment < r.segments.size() ? r.segments[m.segment] : ""},
                     {"crop_index", m.crop},
                     {"sim", m.similarity}};
    if (m.crop < r.crops.size()) j["crop"] = to_json(r.crops[m.crop]);
    matches.push_back(std::move(j));
  }
  nlohmann::json out{{"segments", r.segments}, {"matches", std::move(matches)},
                     {"ita_score", r.ita_score}};
  out["baseline_score"] = r.baseline_score ? nlohmann::json(*r.baseline_score) : nlohmann::json();
  return out;
}

/// Scores one image against one caption: lattice crops of the preprocessed
/// image against the caption's segments, plus the whole-image baseline.
inline MatchReport ita_similarity(const PixelBuffer& image, const std::string& caption,
                                  const CropConfig& crop_config, const SegmentSet& segments,
                                  Embedder& embedder) {
  if (segments.segments.empty()) throw Error(ErrorKind::kEmptyInput, "segment set is empty");
  const PixelBuffer img = preprocess_source(image, crop_config.image_side);
  const auto lattice = generate_lattice(crop_config, img);
  std::vector<PixelBuffer> crops;
  crops.reserve(lattice.size());
  for (const auto& b : lattice.crops) crops.push_back(extract_crop(img, b));
  const auto crop_vecs = embedder.embed_images(crops);
  const auto seg_vecs = embedder.embed_texts(segments.segments);
  auto report = best_matches(similarity_matrix(crop_vecs, seg_vecs, lattice.crops, segments.segments));
  const auto full = embedder.embed_images(std::span<const PixelBuffer>(&img, 1));
  const auto cap = embedder.embed_texts(std::span<const std::string>(&caption, 1));
  report.baseline_score = cosine(full[0], cap[0]);
  return report;
}

}  // namespace ita
