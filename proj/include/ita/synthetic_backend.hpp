#pragma once

// Oracle embedding backends over the synthetic world.
//
// Both backends read the same per-crop object inventory from pixel codes:
// an object counts as present when more than `visible_fraction` of its pixels
// fall inside the crop. Captioned sizes are apparent: an object whose visible
// extent spans at least `large_extent` of the crop reads as "large", so tight
// crops make small objects look large. Same-key objects are counted and the
// count is encoded as a thermometer (>=1, >=2, ...).
//
// synthetic_bound binds every attribute and the count to its noun in a single
// dimension; synthetic_bag gives each attribute, noun and count its own
// dimension, which makes attribute swaps indistinguishable at image level.
// Text is parsed into the same inventory. Inputs with no recognizable content
// activate a dedicated "nothing" dimension so every vector is non-zero.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ita/embedding.hpp"
#include "ita/textseg.hpp"
#include "ita/world.hpp"

namespace ita {

struct SyntheticParams {
  double visible_fraction = 0.5;
  double large_extent = 0.7;
};

/// Attribute slots of one inventory entry; 0 means "not stated".
struct ItemKey {
  int color = 0;     // 0..8
  int size = 0;      // 0 none, 1 small, 2 large
  int material = 0;  // 0 none, 1 rubber, 2 metal
  int noun = 0;      // 0..2

  auto operator<=>(const ItemKey&) const = default;
};

/// Multiset of visible (or mentioned) objects.
using Inventory = std::map<ItemKey, int>;

struct VisibleObject {
  world::ObjectCode code;
  int pixels = 0;
  int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
};

/// Connected components of identically coded pixels (4-neighbourhood).
inline std::vector<VisibleObject> find_objects(const PixelBuffer& img) {
  const int w = img.width, h = img.height;
  std::vector<int> keys(static_cast<std::size_t>(w) * h, -1);
  std::vector<world::ObjectCode> codes(keys.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (auto c = world::decode_pixel(img.at(x, y))) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        keys[i] = c->key();
        codes[i] = *c;
      }
    }
  }
  std::vector<VisibleObject> out;
  std::vector<char> seen(keys.size(), 0);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < keys.size(); ++start) {
    if (keys[start] < 0 || seen[start]) continue;
    VisibleObject obj;
    obj.code = codes[start];
    obj.min_x = w;
    obj.min_y = h;
    obj.max_x = obj.max_y = -1;
    const int key = keys[start];
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
      ++obj.pixels;
      obj.min_x = std::min(obj.min_x, x);
      obj.max_x = std::max(obj.max_x, x);
      obj.min_y = std::min(obj.min_y, y);
      obj.max_y = std::max(obj.max_y, y);
      const int nx[4] = {x - 1, x + 1, x, x};
      const int ny[4] = {y, y, y - 1, y + 1};
      for (int k = 0; k < 4; ++k) {
        if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
        const std::size_t j = static_cast<std::size_t>(ny[k]) * w + nx[k];
        if (!seen[j] && keys[j] == key) {
          seen[j] = 1;
          stack.push_back(j);
        }
      }
    }
    out.push_back(obj);
  }
  return out;
}

inline Inventory image_inventory(const PixelBuffer& img, const SyntheticParams& params) {
  Inventory inv;
  for (const auto& obj : find_objects(img)) {
    const double frac = static_cast<double>(obj.pixels) /
                        world::full_area(obj.code.noun, obj.code.size);
    if (frac <= params.visible_fraction) continue;
    ItemKey key;
    key.color = obj.code.color;
    key.material = static_cast<int>(obj.code.material);
    key.noun = static_cast<int>(obj.code.noun);
    if (obj.code.size_captioned) {
      const double extent =
          std::max(static_cast<double>(obj.max_x - obj.min_x + 1) / img.width,
                   static_cast<double>(obj.max_y - obj.min_y + 1) / img.height);
      key.size = extent >= params.large_extent ? 2 : 1;
    }
    ++inv[key];
  }
  return inv;
}

/// Parses "a small red cube and three spheres" style phrases. Unknown words
/// are skipped; a noun closes the pending phrase.
inline Inventory text_inventory(std::string_view segment) {
  Inventory inv;
  ItemKey pending;
  int count = 0;
  for (const auto& w : text::normalized_words(segment)) {
    if (auto c = world::lookup(world::kColorNames, w)) {
      pending.color = *c;
    } else if (auto s = world::lookup(world::kSizeNames, w)) {
      pending.size = *s + 1;
    } else if (auto m = world::lookup(world::kMaterialNames, w)) {
      pending.material = *m;
    } else if (auto n = world::lookup(world::kCountWords, w)) {
      count = *n;
    } else if ((w == "a" || w == "an") && count == 0) {
      count = 1;
    } else {
      bool plural = false;
      auto noun = world::lookup(world::kNounNames, w);
      if (!noun) {
        noun = world::lookup(world::kNounPlurals, w);
        plural = noun.has_value();
      }
      if (!noun) continue;
      pending.noun = *noun;
      const int k = count > 0 ? count : (plural ? 2 : 1);
      inv[pending] = std::min(inv[pending] + k, world::kMaxCount);
      pending = ItemKey{};
      count = 0;
    }
  }
  return inv;
}

/// Shared implementation; `bound` selects the feature map.
class SyntheticBackend : public EmbeddingBackend {
 public:
  static constexpr std::size_t kBoundDim =
      world::kNumColors * 3 * world::kNumMaterials * world::kNumNouns * world::kMaxCount + 1;
  static constexpr std::size_t kBagDim =
      (world::kNumColors - 1) + 2 + 2 + world::kNumNouns + (world::kMaxCount - 1) + 1;

  explicit SyntheticBackend(BackendKind kind, SyntheticParams params = {})
      : params_(params) {
    if (kind != BackendKind::kSyntheticBound && kind != BackendKind::kSyntheticBag) {
      throw Error(ErrorKind::kInvalidConfig, "not a synthetic backend kind");
    }
    bound_ = kind == BackendKind::kSyntheticBound;
    desc_.kind = kind;
    desc_.dim = bound_ ? kBoundDim : kBagDim;
    desc_.input_side = 0;
    desc_.version = "1;native-pixels;vis>" + format_param(params.visible_fraction) +
                    ";large>=" + format_param(params.large_extent);
    desc_.backend_id = to_string(kind) + "@" + desc_.version;
  }

  const BackendDescriptor& descriptor() const override { return desc_; }

  std::vector<EmbeddingVector> embed_image_batch(std::span<const PixelBuffer> images) override {
    std::vector<EmbeddingVector> out;
    out.reserve(images.size());
    for (const auto& img : images) out.push_back(vectorize(image_inventory(img, params_)));
    return out;
  }

  std::vector<EmbeddingVector> embed_text_batch(std::span<const std::string> texts) override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
      if (text::trim(t).empty()) throw Error(ErrorKind::kEmptyInput, "empty segment");
      out.push_back(vectorize(text_inventory(t)));
    }
    return out;
  }

  std::size_t max_batch() const override { return 256; }

  /// Active dimensions for an inventory under this backend's feature map.
  std::set<std::size_t> active_dims(const Inventory& inv) const {
    std::set<std::size_t> dims;
    for (const auto& [key, k] : inv) {
      if (bound_) {
        for (int c = 1; c <= std::min(k, world::kMaxCount); ++c) dims.insert(bound_dim(key, c));
      } else {
        if (key.color > 0) dims.insert(static_cast<std::size_t>(key.color - 1));
        if (key.size > 0) dims.insert(static_cast<std::size_t>(7 + key.size));
        if (key.material > 0) dims.insert(static_cast<std::size_t>(9 + key.material));
        dims.insert(static_cast<std::size_t>(12 + key.noun));
        for (int c = 2; c <= std::min(k, world::kMaxCount); ++c) {
          dims.insert(static_cast<std::size_t>(15 + c - 2));
        }
      }
    }
    if (dims.empty()) dims.insert(desc_.dim - 1);
    return dims;
  }

  static std::size_t bound_dim(const ItemKey& key, int count) {
    const std::size_t tuple =
        ((static_cast<std::size_t>(key.color) * 3 + key.size) * world::kNumMaterials +
         key.material) * world::kNumNouns + key.noun;
    return tuple * world::kMaxCount + (count - 1);
  }

  /// Bag-space dimension of a single vocabulary word, for tests and dumps.
  static std::size_t bag_dim(std::string_view word) {
    if (auto c = world::lookup(world::kColorNames, word)) return *c - 1;
    if (auto s = world::lookup(world::kSizeNames, word)) return 8 + *s;
    if (auto m = world::lookup(world::kMaterialNames, word)) return 9 + *m;
    if (auto n = world::lookup(world::kNounNames, word)) return 12 + *n;
    throw Error(ErrorKind::kInvalidConfig, "not a bag vocabulary word: " + std::string(word));
  }

  const SyntheticParams& params() const { return params_; }

 private:
  static std::string format_param(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
  }

  EmbeddingVector vectorize(const Inventory& inv) const {
    const auto dims = active_dims(inv);
    EmbeddingVector v;
    v.values.assign(desc_.dim, 0.0f);
    const float x = static_cast<float>(1.0 / std::sqrt(static_cast<double>(dims.size())));
    for (std::size_t d : dims) v.values[d] = x;
    v.normalized = true;
    return v;
  }

  SyntheticParams params_;
  bool bound_ = true;
  BackendDescriptor desc_;
};

}  // namespace ita
