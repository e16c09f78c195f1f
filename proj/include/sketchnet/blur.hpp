#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "sketchnet/raster.hpp"

namespace sketchnet {

/// Downsample sizes of the multi-scale ensemble, finest first.
inline constexpr std::array<int, 5> kEnsembleScales{256, 224, 192, 128, 64};

inline bool is_ensemble_scale(int s) {
  return std::find(kEnsembleScales.begin(), kEnsembleScales.end(), s) != kEnsembleScales.end();
}

namespace detail {

struct ResampleTap {
  std::size_t first;
  std::vector<float> weights;
};

// Triangle (bilinear) filter with half-pixel centres. When shrinking, the
// filter is stretched by the reduction factor so every source pixel
// contributes; edge taps are renormalized.
inline std::vector<ResampleTap> bilinear_taps(std::size_t src, std::size_t dst) {
  const double ratio = static_cast<double>(src) / static_cast<double>(dst);
  const double support = std::max(ratio, 1.0);
  std::vector<ResampleTap> taps(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    const double centre = (static_cast<double>(i) + 0.5) * ratio;
    const long lo = std::max<long>(0, static_cast<long>(std::floor(centre - support)));
    const long hi = std::min<long>(static_cast<long>(src) - 1, static_cast<long>(std::ceil(centre + support)));
    std::vector<double> w;
    double sum = 0;
    for (long j = lo; j <= hi; ++j) {
      const double v = std::max(0.0, 1.0 - std::abs((static_cast<double>(j) + 0.5 - centre) / support));
      w.push_back(v);
      sum += v;
    }
    taps[i].first = static_cast<std::size_t>(lo);
    for (double v : w) taps[i].weights.push_back(static_cast<float>(v / sum));
  }
  return taps;
}

inline std::vector<float> resample(std::span<const float> src, std::size_t sh, std::size_t sw,
                                   std::size_t dh, std::size_t dw) {
  const auto tx = bilinear_taps(sw, dw);
  const auto ty = bilinear_taps(sh, dh);
  std::vector<float> rows(sh * dw);
  for (std::size_t y = 0; y < sh; ++y)
    for (std::size_t x = 0; x < dw; ++x) {
      float acc = 0;
      const auto& t = tx[x];
      for (std::size_t k = 0; k < t.weights.size(); ++k) acc += t.weights[k] * src[y * sw + t.first + k];
      rows[y * dw + x] = acc;
    }
  std::vector<float> out(dh * dw, 0.0f);
  for (std::size_t y = 0; y < dh; ++y) {
    const auto& t = ty[y];
    for (std::size_t k = 0; k < t.weights.size(); ++k) {
      const float w = t.weights[k];
      const float* r = rows.data() + (t.first + k) * dw;
      float* o = out.data() + y * dw;
      for (std::size_t x = 0; x < dw; ++x) o[x] += w * r[x];
    }
  }
  return out;
}

}  // namespace detail

/// Bilinear resize of every channel.
inline RasterImage resize_bilinear(const RasterImage& img, std::size_t height, std::size_t width) {
  RasterImage out(img.channels(), height, width);
  for (std::size_t c = 0; c < img.channels(); ++c) {
    auto r = detail::resample(img.channel(c), img.height(), img.width(), height, width);
    std::copy(r.begin(), r.end(), out.channel(c).begin());
  }
  return out;
}

/// Coarsens a 256x256 raster by resizing down to scale x scale and back up,
/// clamping to [0, 1]. Scale 256 returns the input unchanged.
inline RasterImage blur_scale(const RasterImage& img, int scale) {
  if (!is_ensemble_scale(scale))
    throw ConfigError("unknown blur scale " + std::to_string(scale) + " (use 256, 224, 192, 128 or 64)");
  if (img.height() != kRasterSize || img.width() != kRasterSize)
    throw ShapeError("blur_scale expects a 256x256 raster");
  if (scale == static_cast<int>(kRasterSize)) return img;
  const auto s = static_cast<std::size_t>(scale);
  RasterImage out = resize_bilinear(resize_bilinear(img, s, s), kRasterSize, kRasterSize);
  for (auto& v : out.tensor().data()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace sketchnet
