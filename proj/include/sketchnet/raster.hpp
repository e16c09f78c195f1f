#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "sketchnet/sketch.hpp"
#include "sketchnet/tensor.hpp"

namespace sketchnet {

/// Channels x height x width grid. Ink is 1, background 0.
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(std::size_t channels, std::size_t height, std::size_t width)
      : pixels_({channels, height, width}) {}
  explicit RasterImage(Tensor<float> pixels) : pixels_(std::move(pixels)) {
    require_rank(pixels_.shape(), 3, "RasterImage");
  }

  std::size_t channels() const { return pixels_.dim(0); }
  std::size_t height() const { return pixels_.dim(1); }
  std::size_t width() const { return pixels_.dim(2); }

  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels_[(c * height() + y) * width() + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels_[(c * height() + y) * width() + x];
  }

  std::span<float> channel(std::size_t c) {
    return pixels_.data().subspan(c * height() * width(), height() * width());
  }
  std::span<const float> channel(std::size_t c) const {
    return pixels_.data().subspan(c * height() * width(), height() * width());
  }

  std::size_t ink_count(std::size_t c) const {
    std::size_t n = 0;
    for (float v : channel(c)) n += v > 0.0f;
    return n;
  }

  const Tensor<float>& tensor() const { return pixels_; }
  Tensor<float>& tensor() { return pixels_; }

  bool operator==(const RasterImage&) const = default;

 private:
  Tensor<float> pixels_;
};

inline constexpr std::size_t kRasterSize = 256;
inline constexpr int kDefaultLineWidth = 2;
inline constexpr double kRenderMargin = 0.03;

// ---------------------------------------------------------------- stroke groups

inline double stroke_length(const Stroke& s) {
  double len = 0;
  for (std::size_t i = 1; i < s.size(); ++i) len += std::hypot(s[i].x - s[i - 1].x, s[i].y - s[i - 1].y);
  return len;
}

/// Boundaries (b1, b2) splitting strokes into [0,b1), [b1,b2), [b2,n) so the
/// largest deviation of a group's summed length from total/3 is minimal.
/// Ties prefer the smaller summed deviation, then the earliest boundaries.
/// With three or more strokes every group is non-empty.
inline std::pair<std::size_t, std::size_t> group_boundaries(std::span<const double> lengths) {
  const std::size_t n = lengths.size();
  if (n == 0) return {0, 0};
  if (n == 1) return {1, 1};
  if (n == 2) return {1, 2};
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + lengths[i];
  const double target = prefix[n] / 3.0;
  std::pair<std::size_t, std::size_t> best{1, 2};
  double best_max = std::numeric_limits<double>::infinity();
  double best_sum = best_max;
  for (std::size_t b1 = 1; b1 + 1 < n; ++b1)
    for (std::size_t b2 = b1 + 1; b2 < n; ++b2) {
      const double d1 = std::abs(prefix[b1] - target);
      const double d2 = std::abs(prefix[b2] - prefix[b1] - target);
      const double d3 = std::abs(prefix[n] - prefix[b2] - target);
      const double mx = std::max({d1, d2, d3});
      const double sm = d1 + d2 + d3;
      if (mx < best_max || (mx == best_max && sm < best_sum)) {
        best = {b1, b2};
        best_max = mx;
        best_sum = sm;
      }
    }
  return best;
}

using StrokeGroups = std::array<std::vector<Stroke>, 3>;

/// Three temporally contiguous stroke groups of roughly equal ink length.
inline StrokeGroups split_strokes(const StrokeSketch& s) {
  std::vector<double> lengths;
  for (const auto& st : s.strokes) lengths.push_back(stroke_length(st));
  const auto [b1, b2] = group_boundaries(lengths);
  StrokeGroups g;
  for (std::size_t i = 0; i < s.strokes.size(); ++i)
    g[i < b1 ? 0 : (i < b2 ? 1 : 2)].push_back(s.strokes[i]);
  return g;
}

// ---------------------------------------------------------------- rasterization

/// Maps canvas coordinates into a size x size raster, aspect preserved,
/// centred, with a 3% margin on the longer side.
struct CanvasTransform {
  double scale = 1;
  double offset_x = 0;
  double offset_y = 0;

  CanvasTransform(double canvas_w, double canvas_h, std::size_t size) {
    if (!(canvas_w > 0 && canvas_h > 0)) throw DataError("canvas extents must be positive");
    const double usable = static_cast<double>(size) * (1.0 - 2.0 * kRenderMargin);
    scale = usable / std::max(canvas_w, canvas_h);
    offset_x = (static_cast<double>(size) - canvas_w * scale) / 2.0;
    offset_y = (static_cast<double>(size) - canvas_h * scale) / 2.0;
  }

  Point apply(Point p) const { return {offset_x + p.x * scale, offset_y + p.y * scale}; }
};

namespace detail {

inline void stamp(RasterImage& img, std::size_t c, double px, double py, int width) {
  const double half = width / 2.0;
  const long x0 = static_cast<long>(std::floor(px - half + 0.5));
  const long y0 = static_cast<long>(std::floor(py - half + 0.5));
  const double centre = (width - 1) / 2.0;
  const double r2 = half * half;
  for (int dy = 0; dy < width; ++dy)
    for (int dx = 0; dx < width; ++dx) {
      const double ex = dx - centre, ey = dy - centre;
      if (ex * ex + ey * ey > r2) continue;
      const long x = x0 + dx, y = y0 + dy;
      if (x < 0 || y < 0 || x >= static_cast<long>(img.width()) || y >= static_cast<long>(img.height()))
        continue;
      img.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 1.0f;
    }
}

}  // namespace detail

/// Draws a polyline given in pixel coordinates (pixel (i, j) covers
/// [i, i+1) x [j, j+1)). Each segment is walked in unit steps along its
/// major axis and a round brush of `width` pixels is stamped at each step.
/// A single point leaves one brush dot. Ink outside the image is clipped.
inline void draw_polyline(RasterImage& img, std::size_t channel, std::span<const Point> pts, int width) {
  if (pts.empty()) return;
  if (width < 1) throw ConfigError("line width must be >= 1");
  detail::stamp(img, channel, pts[0].x, pts[0].y, width);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const Point a = pts[i - 1], b = pts[i];
    const double steps = std::ceil(std::max(std::abs(b.x - a.x), std::abs(b.y - a.y)));
    const long n = static_cast<long>(steps);
    for (long k = 1; k <= n; ++k) {
      const double t = static_cast<double>(k) / steps;
      detail::stamp(img, channel, a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t, width);
    }
  }
}

inline void render_into(RasterImage& img, std::size_t channel, std::span<const Stroke> strokes,
                        const CanvasTransform& tf, int line_width) {
  std::vector<Point> px;
  for (const auto& s : strokes) {
    px.clear();
    for (const auto& p : s) px.push_back(tf.apply(p));
    draw_polyline(img, channel, px, line_width);
  }
}

/// Binary single-channel raster of the given strokes.
inline RasterImage render(std::span<const Stroke> strokes, double canvas_w, double canvas_h,
                          std::size_t size = kRasterSize, int line_width = kDefaultLineWidth) {
  RasterImage img(1, size, size);
  render_into(img, 0, strokes, CanvasTransform(canvas_w, canvas_h, size), line_width);
  return img;
}

inline RasterImage render(const StrokeSketch& s, std::size_t size = kRasterSize,
                          int line_width = kDefaultLineWidth) {
  return render(s.strokes, s.canvas_w, s.canvas_h, size, line_width);
}

/// Stroke-order encoding: groups g1, g2, g3 alone, then g1+g2, g2+g3, and
/// all strokes. Each stroke's pixels do not depend on the other strokes,
/// so unions are computed as pixelwise maxima of the group rasters.
inline RasterImage make_channels(const StrokeSketch& s, std::size_t size = kRasterSize,
                                 int line_width = kDefaultLineWidth) {
  const auto groups = split_strokes(s);
  const CanvasTransform tf(s.canvas_w, s.canvas_h, size);
  RasterImage img(6, size, size);
  for (std::size_t g = 0; g < 3; ++g) render_into(img, g, groups[g], tf, line_width);
  const std::size_t plane = size * size;
  auto c1 = img.channel(0), c2 = img.channel(1), c3 = img.channel(2);
  auto c4 = img.channel(3), c5 = img.channel(4), c6 = img.channel(5);
  for (std::size_t i = 0; i < plane; ++i) {
    c4[i] = std::max(c1[i], c2[i]);
    c5[i] = std::max(c2[i], c3[i]);
    c6[i] = std::max(c4[i], c3[i]);
  }
  return img;
}

/// Network input raster with 1 (whole sketch) or 6 (stroke order) channels.
inline RasterImage render_channels(const StrokeSketch& s, std::size_t channels,
                                   std::size_t size = kRasterSize, int line_width = kDefaultLineWidth) {
  if (channels == 6) return make_channels(s, size, line_width);
  if (channels == 1) return render(s, size, line_width);
  throw ConfigError("input channels must be 1 or 6");
}

}  // namespace sketchnet
