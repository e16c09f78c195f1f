#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "sketchnet/raster.hpp"
#include "sketchnet/rng.hpp"
#include "sketchnet/sketch.hpp"

namespace sketchnet {

inline constexpr int kMaxRotation = 5;   // degrees, both directions
inline constexpr int kShiftSteps = 32;   // shift values 0..31 per axis
inline constexpr std::size_t kCropSize = 225;
inline constexpr std::size_t kAugmentGridSize = 2 * (2 * kMaxRotation + 1) * kShiftSteps * kShiftSteps;

struct AugmentParams {
  bool flip = false;
  int rotation_degrees = 0;  // [-5, 5]
  int shift_x = 0;           // [0, 31]
  int shift_y = 0;           // [0, 31]

  bool operator==(const AugmentParams&) const = default;
};

/// Pixel displacement realized by a shift value. The 32 values cover
/// displacements -16..15 so the grid is centred on the identity.
inline int shift_displacement(int shift) { return shift - kShiftSteps / 2; }

/// Every combination of reflection, integer rotation and x/y shift:
/// 2 * 11 * 32 * 32 = 22,528 tuples.
inline std::vector<AugmentParams> enumerate_grid() {
  std::vector<AugmentParams> grid;
  grid.reserve(kAugmentGridSize);
  for (int f = 0; f < 2; ++f)
    for (int r = -kMaxRotation; r <= kMaxRotation; ++r)
      for (int sx = 0; sx < kShiftSteps; ++sx)
        for (int sy = 0; sy < kShiftSteps; ++sy) grid.push_back({f == 1, r, sx, sy});
  return grid;
}

/// Uniform draw from the grid without materializing it.
inline AugmentParams sample_augment(Rng& rng) {
  std::uint64_t i = rng.below(kAugmentGridSize);
  AugmentParams a;
  a.shift_y = static_cast<int>(i % kShiftSteps);
  i /= kShiftSteps;
  a.shift_x = static_cast<int>(i % kShiftSteps);
  i /= kShiftSteps;
  a.rotation_degrees = static_cast<int>(i % (2 * kMaxRotation + 1)) - kMaxRotation;
  i /= 2 * kMaxRotation + 1;
  a.flip = i == 1;
  return a;
}

/// Applies reflection and rotation to stroke coordinates about the canvas
/// centre. Shifts act on the rendered raster (see shift_raster).
inline StrokeSketch augment(const StrokeSketch& s, const AugmentParams& a) {
  if (!a.flip && a.rotation_degrees == 0) return s;
  StrokeSketch out = s;
  const double cx = s.canvas_w / 2.0, cy = s.canvas_h / 2.0;
  const double theta = a.rotation_degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta), sn = std::sin(theta);
  for (auto& stroke : out.strokes)
    for (auto& p : stroke) {
      double x = p.x - cx, y = p.y - cy;
      if (a.flip) x = -x;
      if (a.rotation_degrees != 0) {
        const double rx = c * x - sn * y;
        const double ry = sn * x + c * y;
        x = rx;
        y = ry;
      }
      p = {x + cx, y + cy};
    }
  return out;
}

/// Moves raster content by (dx, dy) pixels; ink leaving the frame is lost.
inline RasterImage shift_raster(const RasterImage& img, int dx, int dy) {
  if (dx == 0 && dy == 0) return img;
  RasterImage out(img.channels(), img.height(), img.width());
  const long h = static_cast<long>(img.height()), w = static_cast<long>(img.width());
  for (std::size_t c = 0; c < img.channels(); ++c)
    for (long y = 0; y < h; ++y) {
      const long sy = y - dy;
      if (sy < 0 || sy >= h) continue;
      for (long x = 0; x < w; ++x) {
        const long sx = x - dx;
        if (sx >= 0 && sx < w)
          out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
              img.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
      }
    }
  return out;
}

// ---------------------------------------------------------------- crops

enum class CropPosition { TopLeft, TopRight, BottomLeft, BottomRight, Center };

inline constexpr std::array<CropPosition, 5> kCropPositions{
    CropPosition::TopLeft, CropPosition::TopRight, CropPosition::BottomLeft,
    CropPosition::BottomRight, CropPosition::Center};

/// Top-left corner (x, y) of a crop of `crop` pixels inside `size`.
inline std::pair<std::size_t, std::size_t> crop_offset(CropPosition pos, std::size_t size = kRasterSize,
                                                       std::size_t crop = kCropSize) {
  const std::size_t far = size - crop;
  switch (pos) {
    case CropPosition::TopLeft: return {0, 0};
    case CropPosition::TopRight: return {far, 0};
    case CropPosition::BottomLeft: return {0, far};
    case CropPosition::BottomRight: return {far, far};
    case CropPosition::Center: return {far / 2, far / 2};
  }
  return {0, 0};
}

/// Square crop starting at (x0, y0), optionally mirrored left-right.
inline RasterImage crop_at(const RasterImage& img, std::size_t x0, std::size_t y0, bool flip,
                           std::size_t crop = kCropSize) {
  if (x0 + crop > img.width() || y0 + crop > img.height())
    throw ShapeError("crop window exceeds image");
  RasterImage out(img.channels(), crop, crop);
  for (std::size_t c = 0; c < img.channels(); ++c)
    for (std::size_t y = 0; y < crop; ++y)
      for (std::size_t x = 0; x < crop; ++x)
        out.at(c, y, flip ? crop - 1 - x : x) = img.at(c, y0 + y, x0 + x);
  return out;
}

inline RasterImage crop(const RasterImage& img, CropPosition pos, bool flip) {
  const auto [x0, y0] = crop_offset(pos, img.width());
  return crop_at(img, x0, y0, flip);
}

/// The five crop positions unflipped, then the same five mirrored.
inline std::vector<RasterImage> ten_crops(const RasterImage& img) {
  std::vector<RasterImage> out;
  out.reserve(10);
  for (bool flip : {false, true})
    for (auto pos : kCropPositions) out.push_back(crop(img, pos, flip));
  return out;
}

}  // namespace sketchnet
