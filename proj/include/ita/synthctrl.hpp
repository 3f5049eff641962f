#pragma once

// Controlled swap instances over a 2-D CLEVR-like world: two-object scenes
// that swap color, size or material between the objects, and two-group scenes
// that swap the counts of two shape groups.

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ita/datasets.hpp"
#include "ita/error.hpp"
#include "ita/image.hpp"
#include "ita/textseg.hpp"
#include "ita/world.hpp"

namespace ita::synth {

enum class Variant { kColor, kSize, kMaterial, kQuantity };

inline constexpr std::array<Variant, 4> kAllVariants = {
    Variant::kColor, Variant::kSize, Variant::kMaterial, Variant::kQuantity};

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kColor: return "color";
    case Variant::kSize: return "size";
    case Variant::kMaterial: return "material";
    case Variant::kQuantity: return "quantity";
  }
  return "color";
}

inline Variant variant_from_string(std::string_view s) {
  for (Variant v : kAllVariants) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorKind::kInvalidConfig, "unknown variant '" + std::string(s) + "'");
}

inline constexpr int kCanvas = kWorkingSide;
// Object centers snap to this lattice.
inline constexpr int kCellPx = 4;
// Minimum background gap between object bounding boxes.
inline constexpr int kMinGapPx = 4;

struct PlacedObject {
  world::ObjectCode code;
  int cx = 0;
  int cy = 0;

  int radius() const { return world::radius_of(code.size); }

  friend bool operator==(const PlacedObject&, const PlacedObject&) = default;
};

struct SceneSpec {
  std::vector<PlacedObject> objects;
  int canvas = kCanvas;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct SwapInstanceSpec {
  Variant variant = Variant::kColor;
  std::uint64_t seed = 0;
  SceneSpec positive;
  SceneSpec negative;
  SceneGraph positive_graph;
  SceneGraph negative_graph;
  std::string positive_caption;
  std::string negative_caption;
  std::map<Granularity, SegmentSet> positive_segments;
  std::map<Granularity, SegmentSet> negative_segments;
};

/// Applies the variant's swap. An involution: applying it twice is identity.
inline SceneSpec apply_swap(Variant variant, const SceneSpec& scene) {
  SceneSpec out = scene;
  auto& objs = out.objects;
  switch (variant) {
    case Variant::kColor:
      std::swap(objs.at(0).code.color, objs.at(1).code.color);
      break;
    case Variant::kSize:
      std::swap(objs.at(0).code.size, objs.at(1).code.size);
      break;
    case Variant::kMaterial:
      std::swap(objs.at(0).code.material, objs.at(1).code.material);
      break;
    case Variant::kQuantity: {
      // Objects are stored group by group; the first group's noun takes the
      // second group's count and vice versa, positions unchanged.
      const auto first = objs.at(0).code.noun;
      const auto n = static_cast<std::size_t>(
          std::count_if(objs.begin(), objs.end(),
                        [&](const PlacedObject& o) { return o.code.noun == first; }));
      const auto second_it = std::find_if(objs.begin(), objs.end(),
                                          [&](const PlacedObject& o) { return o.code.noun != first; });
      if (second_it == objs.end()) throw Error(ErrorKind::kInvalidConfig, "quantity scene needs two groups");
      const auto second = second_it->code.noun;
      const std::size_t m = objs.size() - n;
      for (std::size_t i = 0; i < objs.size(); ++i) objs[i].code.noun = i < m ? first : second;
      break;
    }
  }
  return out;
}

/// Scene graph of what a caption states about the scene.
inline SceneGraph scene_graph_of(Variant variant, const SceneSpec& scene) {
  SceneGraph g;
  if (variant == Variant::kQuantity) {
    std::vector<std::pair<world::Noun, int>> groups;
    for (const auto& o : scene.objects) {
      auto it = std::find_if(groups.begin(), groups.end(),
                             [&](const auto& p) { return p.first == o.code.noun; });
      if (it == groups.end()) {
        groups.emplace_back(o.code.noun, 1);
      } else {
        ++it->second;
      }
    }
    for (const auto& [noun, count] : groups) {
      g.group_counts.push_back({std::string(world::kCountWords.at(count)),
                                std::string(world::kNounNames[static_cast<int>(noun)])});
    }
    return g;
  }
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& c = scene.objects[i].code;
    SceneObject o;
    o.id = "o" + std::to_string(i);
    o.noun = std::string(world::kNounNames[static_cast<int>(c.noun)]);
    if (c.size_captioned) o.attributes.emplace_back(world::kSizeNames[static_cast<int>(c.size)]);
    if (c.color != world::kNeutralColor) o.attributes.emplace_back(world::kColorNames[c.color]);
    if (c.material != world::Material::kNone) {
      o.attributes.emplace_back(world::kMaterialNames[static_cast<int>(c.material)]);
    }
    g.objects.push_back(std::move(o));
  }
  for (std::size_t i = 1; i < g.objects.size(); ++i) {
    g.relations.push_back({g.objects[i - 1].id, "and", g.objects[i].id});
  }
  return g;
}

namespace detail {

struct Slot {
  int cx, cy, r;
};

inline bool separated(const Slot& a, const Slot& b) {
  const int gap_x = std::abs(a.cx - b.cx) - a.r - b.r;
  const int gap_y = std::abs(a.cy - b.cy) - a.r - b.r;
  return gap_x >= kMinGapPx || gap_y >= kMinGapPx;
}

// Rejection-samples centers for objects of the given (worst-case) radii.
inline std::vector<Slot> place(std::mt19937_64& rng, const std::vector<int>& radii) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::vector<Slot> slots;
    bool ok = true;
    for (int r : radii) {
      const int lo = (r + kCellPx - 1) / kCellPx;
      const int hi = (kCanvas - r) / kCellPx;
      std::uniform_int_distribution<int> cell(lo, hi);
      bool placed = false;
      for (int tries = 0; tries < 200 && !placed; ++tries) {
        Slot s{cell(rng) * kCellPx, cell(rng) * kCellPx, r};
        if (std::all_of(slots.begin(), slots.end(), [&](const Slot& o) { return separated(o, s); })) {
          slots.push_back(s);
          placed = true;
        }
      }
      if (!placed) {
        ok = false;
        break;
      }
    }
    if (ok) return slots;
  }
  throw Error(ErrorKind::kInvalidConfig, "could not place scene objects");
}

template <typename T>
T pick(std::mt19937_64& rng, T lo, T hi) {
  std::uniform_int_distribution<T> d(lo, hi);
  return d(rng);
}

// Two distinct nouns in random order.
inline std::pair<world::Noun, world::Noun> two_nouns(std::mt19937_64& rng) {
  const int a = pick(rng, 0, world::kNumNouns - 1);
  const int b = (a + pick(rng, 1, world::kNumNouns - 1)) % world::kNumNouns;
  return {static_cast<world::Noun>(a), static_cast<world::Noun>(b)};
}

}  // namespace detail

/// Deterministic in (variant, seed). Positive and negative scenes share all
/// object positions and differ only by the variant's swap.
inline SwapInstanceSpec generate_instance(Variant variant, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(variant) + 0x5157u};
  std::mt19937_64 rng(seq);

  SwapInstanceSpec inst;
  inst.variant = variant;
  inst.seed = seed;
  SceneSpec& pos = inst.positive;

  if (variant == Variant::kQuantity) {
    int a = 0, b = 0;
    do {
      a = detail::pick(rng, 2, world::kMaxCount - 2);
      b = detail::pick(rng, 2, world::kMaxCount - a);
    } while (a == b);
    const auto [n1, n2] = detail::two_nouns(rng);
    const auto slots = detail::place(rng, std::vector<int>(a + b, world::kSmallRadius));
    for (int i = 0; i < a + b; ++i) {
      PlacedObject o;
      o.code.noun = i < a ? n1 : n2;
      o.code.size = world::SizeClass::kSmall;
      o.cx = slots[i].cx;
      o.cy = slots[i].cy;
      pos.objects.push_back(o);
    }
  } else {
    const auto [n1, n2] = detail::two_nouns(rng);
    std::array<PlacedObject, 2> objs{};
    objs[0].code.noun = n1;
    objs[1].code.noun = n2;
    for (auto& o : objs) {
      o.code.size = detail::pick(rng, 0, 1) ? world::SizeClass::kLarge : world::SizeClass::kSmall;
    }
    switch (variant) {
      case Variant::kColor: {
        const int c1 = detail::pick(rng, 1, world::kNumColors - 1);
        int c2 = c1;
        while (c2 == c1) c2 = detail::pick(rng, 1, world::kNumColors - 1);
        objs[0].code.color = c1;
        objs[1].code.color = c2;
        break;
      }
      case Variant::kSize: {
        const bool first_small = detail::pick(rng, 0, 1) == 0;
        objs[0].code.size = first_small ? world::SizeClass::kSmall : world::SizeClass::kLarge;
        objs[1].code.size = first_small ? world::SizeClass::kLarge : world::SizeClass::kSmall;
        for (auto& o : objs) o.code.size_captioned = true;
        break;
      }
      case Variant::kMaterial: {
        const bool first_rubber = detail::pick(rng, 0, 1) == 0;
        objs[0].code.material = first_rubber ? world::Material::kRubber : world::Material::kMetal;
        objs[1].code.material = first_rubber ? world::Material::kMetal : world::Material::kRubber;
        break;
      }
      case Variant::kQuantity:
        break;
    }
    // The size swap moves radii between positions, so place for the larger one.
    std::vector<int> radii;
    for (const auto& o : objs) {
      radii.push_back(variant == Variant::kSize ? world::kLargeRadius : o.radius());
    }
    const auto slots = detail::place(rng, radii);
    for (int i = 0; i < 2; ++i) {
      objs[i].cx = slots[i].cx;
      objs[i].cy = slots[i].cy;
      pos.objects.push_back(objs[i]);
    }
  }

  inst.negative = apply_swap(variant, pos);
  inst.positive_graph = scene_graph_of(variant, inst.positive);
  inst.negative_graph = scene_graph_of(variant, inst.negative);
  inst.positive_caption = realize_caption(inst.positive_graph);
  inst.negative_caption = realize_caption(inst.negative_graph);
  for (Granularity g : {Granularity::kFine, Granularity::kMid, Granularity::kCoarse}) {
    inst.positive_segments[g] = segments_from_scene_graph(inst.positive_graph, g);
    inst.negative_segments[g] = segments_from_scene_graph(inst.negative_graph, g);
  }
  return inst;
}

/// Object pixel rectangle [x0, x1) x [y0, y1).
struct Extent {
  int x0, y0, x1, y1;
};

inline Extent extent_of(const PlacedObject& o) {
  const int r = o.radius();
  return {o.cx - r, o.cy - r, o.cx + r, o.cy + r};
}

/// Filled primitives on a flat background: cube = square, sphere = disc,
/// cylinder = upright body with a lighter top cap. Metal is diagonally
/// hatched, rubber is dotted.
inline PixelBuffer rasterize(const SceneSpec& scene) {
  PixelBuffer img(scene.canvas, scene.canvas);
  const auto bg = world::background_pixel();
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) img.set(x, y, bg[0], bg[1], bg[2]);
  }
  for (const auto& o : scene.objects) {
    const int r = o.radius();
    const Extent e = extent_of(o);
    for (int dy = 0; dy < 2 * r; ++dy) {
      for (int dx = 0; dx < 2 * r; ++dx) {
        const int x = e.x0 + dx, y = e.y0 + dy;
        if (x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
        if (!world::shape_contains(o.code.noun, r, dx, dy)) continue;
        world::Shade shade = world::Shade::kBase;
        if (world::on_top_cap(o.code.noun, r, dx, dy)) {
          shade = world::Shade::kCap;
        } else if (o.code.material == world::Material::kMetal && ((x + y) / 4) % 2 == 1) {
          shade = world::Shade::kStripe;
        } else if (o.code.material == world::Material::kRubber && x % 4 == 0 && y % 4 == 0) {
          shade = world::Shade::kDot;
        }
        const auto px = world::encode_pixel(o.code, shade);
        img.set(x, y, px[0], px[1], px[2]);
      }
    }
  }
  return img;
}

/// Seed of the i-th instance of a suite.
inline std::uint64_t instance_seed(std::uint64_t suite_seed, std::uint64_t i) {
  return (suite_seed << 32) ^ i;
}

inline std::string instance_id(Variant v, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return to_string(v) + "-" + buf;
}

/// Writes <out_dir>/<variant>.jsonl, <out_dir>/<variant>.segments.jsonl and
/// two PNGs per instance under <out_dir>/images/.
inline Manifest emit_manifest(Variant variant, std::size_t n, std::uint64_t seed,
                              const std::filesystem::path& out_dir) {
  if (n == 0) throw Error(ErrorKind::kInvalidConfig, "n must be at least 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + (out_dir / "images").string());

  Manifest m;
  m.name = to_string(variant);
  m.notes = "synthetic swap suite; variant=" + to_string(variant) + " seed=" + std::to_string(seed);
  m.base_dir = out_dir;
  std::ofstream sidecar(out_dir / (to_string(variant) + ".segments.jsonl"), std::ios::trunc);
  if (!sidecar) throw Error(ErrorKind::kIo, "cannot write segments sidecar in " + out_dir.string());

  for (std::size_t i = 0; i < n; ++i) {
    const auto spec = generate_instance(variant, instance_seed(seed, i));
    BidirInstance inst;
    inst.id = instance_id(variant, i);
    const std::string pos = "images/" + inst.id + "_pos.png";
    const std::string neg = "images/" + inst.id + "_neg.png";
    save_png(out_dir / pos, rasterize(spec.positive));
    save_png(out_dir / neg, rasterize(spec.negative));
    inst.image = {pos};
    inst.negative_image = {neg};
    inst.caption = spec.positive_caption;
    inst.negative_caption = spec.negative_caption;
    inst.positive_graph = spec.positive_graph;
    inst.negative_graph = spec.negative_graph;
    for (const auto& [g, set] : spec.positive_segments) {
      sidecar << nlohmann::json{{"id", inst.id},
                                {"granularity", ita::to_string(g)},
                                {"positive_segments", set.segments},
                                {"negative_segments", spec.negative_segments.at(g).segments}}
                     .dump()
              << '\n';
    }
    m.instances.push_back(std::move(inst));
  }
  save_manifest(out_dir / (to_string(variant) + ".jsonl"), m);
  return m;
}

}  // namespace ita::synth
