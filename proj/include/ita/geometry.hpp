#pragma once

#include <algorithm>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "ita/error.hpp"
#include "ita/image.hpp"

namespace ita {

struct CropBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  friend bool operator==(const CropBox&, const CropBox&) = default;
};

struct CropSize {
  int w = 0;
  int h = 0;

  friend bool operator==(const CropSize&, const CropSize&) = default;
};

enum class CropMode { kGrid, kOverlap };

inline std::string to_string(CropMode mode) {
  return mode == CropMode::kGrid ? "grid" : "overlap";
}

inline CropMode crop_mode_from_string(const std::string& s) {
  if (s == "grid") return CropMode::kGrid;
  if (s == "overlap") return CropMode::kOverlap;
  throw Error(ErrorKind::kInvalidConfig, "unknown crop mode '" + s + "'");
}

/// The six scales/aspects used for every experiment configuration.
inline std::vector<CropSize> standard_crop_sizes() {
  return {{32, 32}, {56, 56}, {112, 112}, {224, 224}, {56, 112}, {112, 56}};
}

struct CropConfig {
  std::vector<CropSize> sizes = standard_crop_sizes();
  CropMode mode = CropMode::kOverlap;
  int image_side = kWorkingSide;

  CropSize stride(std::size_t size_index) const {
    const CropSize s = sizes.at(size_index);
    return mode == CropMode::kGrid ? s : CropSize{s.w / 2, s.h / 2};
  }

  void validate() const {
    if (image_side < 1) {
      throw Error(ErrorKind::kInvalidConfig, "image_side must be positive");
    }
    if (sizes.empty()) throw Error(ErrorKind::kInvalidConfig, "no crop sizes");
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      const CropSize s = sizes[i];
      const std::string tag =
          "(" + std::to_string(s.w) + ", " + std::to_string(s.h) + ")";
      if (s.w < 1 || s.h < 1) {
        throw Error(ErrorKind::kInvalidConfig, "non-positive crop size " + tag);
      }
      if (s.w > image_side || s.h > image_side) {
        throw Error(ErrorKind::kInvalidConfig, "crop size " + tag +
                                                   " exceeds image side " +
                                                   std::to_string(image_side));
      }
      if (mode == CropMode::kOverlap && (s.w % 2 != 0 || s.h % 2 != 0)) {
        throw Error(ErrorKind::kInvalidConfig,
                    "overlap mode needs even crop sizes, got " + tag);
      }
      if (std::find(sizes.begin(), sizes.begin() + i, s) != sizes.begin() + i) {
        throw Error(ErrorKind::kInvalidConfig, "duplicate crop size " + tag);
      }
    }
  }
};

struct CropLattice {
  std::vector<CropBox> crops;
  /// Parallel to `crops`: index into config.sizes.
  std::vector<std::size_t> size_index;
  CropConfig config;
  std::string source_id;

  std::size_t size() const { return crops.size(); }
};

/// Enumerates every in-bounds position on each size's stride lattice.
/// Ordered by size index, then y, then x. Overhanging crops are dropped.
inline CropLattice generate_lattice(const CropConfig& config,
                                    std::string source_id = {}) {
  config.validate();
  CropLattice lattice;
  lattice.config = config;
  lattice.source_id = std::move(source_id);
  const int side = config.image_side;
  for (std::size_t si = 0; si < config.sizes.size(); ++si) {
    const CropSize s = config.sizes[si];
    const CropSize st = config.stride(si);
    for (int y = 0; y + s.h <= side; y += st.h) {
      for (int x = 0; x + s.w <= side; x += st.w) {
        lattice.crops.push_back({x, y, s.w, s.h});
        lattice.size_index.push_back(si);
      }
    }
  }
  return lattice;
}

inline CropLattice generate_lattice(const CropConfig& config,
                                    const PixelBuffer& source) {
  return generate_lattice(config, source.content_hash());
}

/// Exact sub-rectangle copy; no resampling.
inline PixelBuffer extract_crop(const PixelBuffer& image, const CropBox& box) {
  if (box.x < 0 || box.y < 0 || box.w < 1 || box.h < 1 ||
      box.x + box.w > image.width || box.y + box.h > image.height) {
    throw Error(ErrorKind::kBounds,
                "crop (" + std::to_string(box.x) + "," + std::to_string(box.y) +
                    "," + std::to_string(box.w) + "," + std::to_string(box.h) +
                    ") outside " + std::to_string(image.width) + "x" +
                    std::to_string(image.height) + " image");
  }
  PixelBuffer out(box.w, box.h);
  for (int y = 0; y < box.h; ++y) {
    const auto* src = image.at(box.x, box.y + y);
    std::copy(src, src + box.w * PixelBuffer::kChannels, out.at(0, y));
  }
  return out;
}

/// CSV dump: index,size_index,x,y,w,h
inline void write_lattice_csv(std::ostream& out, const CropLattice& lattice) {
  out << "index,size_index,x,y,w,h\n";
  for (std::size_t i = 0; i < lattice.crops.size(); ++i) {
    const CropBox& c = lattice.crops[i];
    out << i << ',' << lattice.size_index[i] << ',' << c.x << ',' << c.y << ','
        << c.w << ',' << c.h << '\n';
  }
}

}  // namespace ita
