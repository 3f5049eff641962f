#pragma once

// Vocabulary and pixel conventions of the synthetic CLEVR-like world.
//
// Every object pixel carries a machine-readable code in the two low bits of
// each channel, invisible at normal viewing:
//   R & 3 : noun (0 cube, 1 sphere, 2 cylinder); 3 marks background
//   G & 3 : bit0 = true size is large, bit1 = size is captioned
//   B & 3 : material (0 not captioned, 1 rubber, 2 metal)
// The six high bits of each channel select a palette entry (color + shade).
// Synthetic embedding backends read these codes; PNG round-trips preserve them,
// any lossy resampling does not.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "ita/error.hpp"

namespace ita::world {

enum class Noun : std::uint8_t { kCube = 0, kSphere = 1, kCylinder = 2 };
inline constexpr int kNumNouns = 3;

enum class SizeClass : std::uint8_t { kSmall = 0, kLarge = 1 };

enum class Material : std::uint8_t { kNone = 0, kRubber = 1, kMetal = 2 };
inline constexpr int kNumMaterials = 3;

// Index 0 is the uncaptioned neutral fill; 1..8 are the captioned colors.
inline constexpr int kNeutralColor = 0;
inline constexpr int kNumColors = 9;
inline constexpr std::array<std::string_view, kNumColors> kColorNames = {
    "", "gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow"};
inline constexpr std::array<std::array<int, 3>, kNumColors> kColorRgb = {{
    {188, 188, 188},
    {87, 87, 87},
    {173, 35, 35},
    {42, 75, 215},
    {29, 105, 20},
    {129, 74, 25},
    {129, 38, 192},
    {41, 208, 208},
    {255, 238, 51},
}};

inline constexpr std::array<std::string_view, kNumNouns> kNounNames = {
    "cube", "sphere", "cylinder"};
inline constexpr std::array<std::string_view, kNumNouns> kNounPlurals = {
    "cubes", "spheres", "cylinders"};
inline constexpr std::array<std::string_view, kNumMaterials> kMaterialNames = {
    "", "rubber", "metal"};
inline constexpr std::array<std::string_view, 2> kSizeNames = {"small", "large"};

// Count words for quantities; index == count. 0 and 1 are never captioned.
inline constexpr std::array<std::string_view, 11> kCountWords = {
    "", "one", "two", "three", "four", "five",
    "six", "seven", "eight", "nine", "ten"};
inline constexpr int kMaxCount = 10;

inline constexpr int kSmallRadius = 18;
inline constexpr int kLargeRadius = 44;

inline constexpr int radius_of(SizeClass s) {
  return s == SizeClass::kLarge ? kLargeRadius : kSmallRadius;
}

inline constexpr std::array<int, 3> kBackgroundRgb = {232, 232, 232};

enum class Shade : std::uint8_t { kBase = 0, kStripe = 1, kDot = 2, kCap = 3 };
inline constexpr int kNumShades = 4;

inline std::array<int, 3> shade_rgb(int color, Shade shade) {
  const auto& base = kColorRgb.at(color);
  std::array<int, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const double v = base[c];
    double s = v;
    switch (shade) {
      case Shade::kBase: s = v; break;
      case Shade::kStripe: s = v + (255.0 - v) * 0.45; break;
      case Shade::kDot: s = v * 0.55; break;
      case Shade::kCap: s = v + (255.0 - v) * 0.25; break;
    }
    out[c] = static_cast<int>(std::lround(s)) & 0xFC;
  }
  return out;
}

/// Semantic identity of an object as encoded in its pixels.
struct ObjectCode {
  Noun noun = Noun::kCube;
  int color = kNeutralColor;
  SizeClass size = SizeClass::kSmall;
  bool size_captioned = false;
  Material material = Material::kNone;

  /// Dense key, shade excluded.
  int key() const {
    return (((static_cast<int>(noun) * kNumColors + color) * 2 +
             static_cast<int>(size)) * 2 + (size_captioned ? 1 : 0)) *
               kNumMaterials +
           static_cast<int>(material);
  }

  friend bool operator==(const ObjectCode&, const ObjectCode&) = default;
};

inline std::array<std::uint8_t, 3> encode_pixel(const ObjectCode& code, Shade shade) {
  const auto rgb = shade_rgb(code.color, shade);
  const int g_bits = (code.size == SizeClass::kLarge ? 1 : 0) |
                     (code.size_captioned ? 2 : 0);
  return {static_cast<std::uint8_t>(rgb[0] | static_cast<int>(code.noun)),
          static_cast<std::uint8_t>(rgb[1] | g_bits),
          static_cast<std::uint8_t>(rgb[2] | static_cast<int>(code.material))};
}

inline std::array<std::uint8_t, 3> background_pixel() {
  return {static_cast<std::uint8_t>((kBackgroundRgb[0] & 0xFC) | 3),
          static_cast<std::uint8_t>((kBackgroundRgb[1] & 0xFC) | 3),
          static_cast<std::uint8_t>((kBackgroundRgb[2] & 0xFC) | 3)};
}

namespace detail {

struct PaletteTable {
  // 64^3 entries of high-bit triples -> color index, or -1.
  std::array<std::int8_t, 64 * 64 * 64> color{};

  PaletteTable() {
    color.fill(-1);
    for (int c = 0; c < kNumColors; ++c) {
      for (int s = 0; s < kNumShades; ++s) {
        const auto rgb = shade_rgb(c, static_cast<Shade>(s));
        const int idx = ((rgb[0] >> 2) * 64 + (rgb[1] >> 2)) * 64 + (rgb[2] >> 2);
        color[idx] = static_cast<std::int8_t>(c);
      }
    }
  }
};

inline const PaletteTable& palette() {
  static const PaletteTable table;
  return table;
}

}  // namespace detail

/// Reads the object code of one pixel; nullopt for background or any pixel
/// that is not an exact palette/code match.
inline std::optional<ObjectCode> decode_pixel(const std::uint8_t* px) {
  const int noun = px[0] & 3;
  const int material = px[2] & 3;
  if (noun == 3 || material == 3) return std::nullopt;
  const int idx = ((px[0] >> 2) * 64 + (px[1] >> 2)) * 64 + (px[2] >> 2);
  const int color = detail::palette().color[idx];
  if (color < 0) return std::nullopt;
  ObjectCode code;
  code.noun = static_cast<Noun>(noun);
  code.color = color;
  code.size = (px[1] & 1) ? SizeClass::kLarge : SizeClass::kSmall;
  code.size_captioned = (px[1] & 2) != 0;
  code.material = static_cast<Material>(material);
  return code;
}

/// Shape membership for the pixel at (dx, dy) inside the object's 2r x 2r box.
inline bool shape_contains(Noun noun, int r, int dx, int dy) {
  if (dx < 0 || dy < 0 || dx >= 2 * r || dy >= 2 * r) return false;
  const double px = dx + 0.5;
  const double py = dy + 0.5;
  switch (noun) {
    case Noun::kCube:
      return true;
    case Noun::kSphere: {
      const double ux = px - r;
      const double uy = py - r;
      return ux * ux + uy * uy <= static_cast<double>(r) * r;
    }
    case Noun::kCylinder: {
      // Upright body with elliptical caps, semi-minor axis r/4.
      const double cap = r / 4.0;
      if (py >= cap && py <= 2.0 * r - cap) return true;
      const double cy = py < cap ? cap : 2.0 * r - cap;
      const double ux = (px - r) / r;
      const double uy = (py - cy) / cap;
      return ux * ux + uy * uy <= 1.0;
    }
  }
  return false;
}

/// True when (dx, dy) lies on the cylinder's lighter top cap.
inline bool on_top_cap(Noun noun, int r, int dx, int dy) {
  if (noun != Noun::kCylinder) return false;
  const double cap = r / 4.0;
  const double px = dx + 0.5;
  const double py = dy + 0.5;
  const double ux = (px - r) / r;
  const double uy = (py - cap) / cap;
  return ux * ux + uy * uy <= 1.0;
}

/// Pixel count of a fully visible object; independent of its position.
inline int full_area(Noun noun, SizeClass size) {
  static const auto table = [] {
    std::array<std::array<int, 2>, kNumNouns> t{};
    for (int n = 0; n < kNumNouns; ++n) {
      for (int s = 0; s < 2; ++s) {
        const int r = radius_of(static_cast<SizeClass>(s));
        int count = 0;
        for (int y = 0; y < 2 * r; ++y) {
          for (int x = 0; x < 2 * r; ++x) {
            count += shape_contains(static_cast<Noun>(n), r, x, y) ? 1 : 0;
          }
        }
        t[n][s] = count;
      }
    }
    return t;
  }();
  return table[static_cast<int>(noun)][static_cast<int>(size)];
}

template <std::size_t N>
inline std::optional<int> lookup(const std::array<std::string_view, N>& names,
                                 std::string_view word) {
  for (std::size_t i = 0; i < N; ++i) {
    if (!names[i].empty() && names[i] == word) return static_cast<int>(i);
  }
  return std::nullopt;
}

inline Noun noun_from_string(std::string_view s) {
  if (auto i = lookup(kNounNames, s)) return static_cast<Noun>(*i);
  throw Error(ErrorKind::kSchema, "unknown noun '" + std::string(s) + "'");
}

}  // namespace ita::world
