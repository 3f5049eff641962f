#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ita/error.hpp"
#include "ita/hash.hpp"

namespace ita {

/// Interleaved 8-bit RGB image, row-major, no padding.
struct PixelBuffer {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  static constexpr int kChannels = 3;

  PixelBuffer() = default;
  PixelBuffer(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h),
        data(static_cast<std::size_t>(w) * h * kChannels, fill) {}

  bool empty() const { return width == 0 || height == 0; }

  std::uint8_t* at(int x, int y) {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * kChannels;
  }
  const std::uint8_t* at(int x, int y) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * kChannels;
  }

  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    auto* p = at(x, y);
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }

  /// SHA-256 over dimensions and pixel bytes.
  std::string content_hash() const {
    Sha256 h;
    const std::string dims =
        std::to_string(width) + "x" + std::to_string(height) + ":";
    h.update(dims);
    h.update(std::span<const std::uint8_t>(data));
    return h.hex();
  }

  friend bool operator==(const PixelBuffer&, const PixelBuffer&) = default;
};

namespace detail {

// Keys cubic convolution kernel, a = -0.5.
inline double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return (((t - 5.0) * t + 8.0) * t - 4.0) * a;
  return 0.0;
}

struct Taps {
  int index[4];
  double weight[4];
};

inline std::vector<Taps> cubic_taps(int in_size, int out_size) {
  std::vector<Taps> taps(out_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    const double src = (o + 0.5) * scale - 0.5;
    const int base = static_cast<int>(std::floor(src));
    double sum = 0.0;
    for (int k = 0; k < 4; ++k) {
      const int i = base - 1 + k;
      taps[o].index[k] = std::clamp(i, 0, in_size - 1);
      taps[o].weight[k] = cubic_weight(src - i);
      sum += taps[o].weight[k];
    }
    for (double& w : taps[o].weight) w /= sum;
  }
  return taps;
}

}  // namespace detail

/// Bicubic resample to exactly out_w x out_h (aspect is not preserved).
/// Same-size requests return an exact copy.
inline PixelBuffer resize_bicubic(const PixelBuffer& in, int out_w, int out_h) {
  if (in.empty() || out_w <= 0 || out_h <= 0) {
    throw Error(ErrorKind::kInvalidConfig, "resize of empty image or to empty size");
  }
  if (in.width == out_w && in.height == out_h) return in;

  constexpr int C = PixelBuffer::kChannels;
  const auto xt = detail::cubic_taps(in.width, out_w);
  const auto yt = detail::cubic_taps(in.height, out_h);

  std::vector<double> horiz(static_cast<std::size_t>(out_w) * in.height * C);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < out_w; ++x) {
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) {
          acc += xt[x].weight[k] * in.at(xt[x].index[k], y)[c];
        }
        horiz[(static_cast<std::size_t>(y) * out_w + x) * C + c] = acc;
      }
    }
  }

  PixelBuffer out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) {
          acc += yt[y].weight[k] *
                 horiz[(static_cast<std::size_t>(yt[y].index[k]) * out_w + x) * C + c];
        }
        out.at(x, y)[c] =
            static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
      }
    }
  }
  return out;
}

inline constexpr int kWorkingSide = 224;

/// Shorter side to `side` (bicubic), then center crop to side x side.
/// Images already at side x side pass through untouched.
inline PixelBuffer preprocess_source(const PixelBuffer& in, int side = kWorkingSide) {
  if (in.empty()) throw Error(ErrorKind::kDecode, "empty image");
  if (in.width == side && in.height == side) return in;

  int w = side, h = side;
  if (in.width < in.height) {
    h = static_cast<int>(std::lround(static_cast<double>(in.height) * side / in.width));
  } else {
    w = static_cast<int>(std::lround(static_cast<double>(in.width) * side / in.height));
  }
  const PixelBuffer scaled = resize_bicubic(in, std::max(w, side), std::max(h, side));
  const int x0 = (scaled.width - side) / 2;
  const int y0 = (scaled.height - side) / 2;
  PixelBuffer out(side, side);
  for (int y = 0; y < side; ++y) {
    const auto* src = scaled.at(x0, y0 + y);
    std::copy(src, src + side * PixelBuffer::kChannels, out.at(0, y));
  }
  return out;
}

}  // namespace ita
