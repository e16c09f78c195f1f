#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "sketchnet/rng.hpp"
#include "sketchnet/sketch.hpp"

// Programmatic stroke data for tests, acceptance runs and demos. Shapes are
// drawn in unit coordinates ([-1, 1] square), jittered, and placed on a
// 256 x 256 canvas.

namespace sketchnet::synthetic {

inline constexpr double kCanvas = 256.0;

namespace detail {

inline std::string padded(std::size_t i) {
  std::string s = std::to_string(i);
  return s.size() < 4 ? std::string(4 - s.size(), '0') + s : s;
}

inline Stroke arc(double cx, double cy, double r, double a0, double a1, int n) {
  Stroke s;
  for (int i = 0; i <= n; ++i) {
    const double t = a0 + (a1 - a0) * i / n;
    s.push_back({cx + r * std::cos(t), cy + r * std::sin(t)});
  }
  return s;
}

inline Stroke segment(double x0, double y0, double x1, double y1, int n = 8) {
  Stroke s;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    s.push_back({x0 + (x1 - x0) * t, y0 + (y1 - y0) * t});
  }
  return s;
}

inline std::vector<Stroke> polygon_edges(const std::vector<Point>& v) {
  std::vector<Stroke> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Point a = v[i], b = v[(i + 1) % v.size()];
    out.push_back(segment(a.x, a.y, b.x, b.y));
  }
  return out;
}

constexpr double kPi = std::numbers::pi;

inline std::vector<Stroke> circle(Rng&) { return {arc(0, 0, 1, 0, 2 * kPi, 48)}; }

inline std::vector<Stroke> square(Rng&) { return polygon_edges({{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}); }

inline std::vector<Stroke> triangle(Rng&) { return polygon_edges({{0, -1}, {1, 0.8}, {-1, 0.8}}); }

inline std::vector<Stroke> star(Rng&) {
  Stroke s;
  for (int i = 0; i < 5; ++i) {
    const double t0 = -kPi / 2 + (i * 2 % 5) * 2 * kPi / 5;
    const double t1 = -kPi / 2 + ((i + 1) * 2 % 5) * 2 * kPi / 5;
    const Stroke seg = segment(std::cos(t0), std::sin(t0), std::cos(t1), std::sin(t1));
    s.insert(s.end(), seg.begin() + (i ? 1 : 0), seg.end());
  }
  return {s};
}

inline std::vector<Stroke> cross(Rng&) { return {segment(0, -1, 0, 1), segment(-1, 0, 1, 0)}; }

inline std::vector<Stroke> house(Rng&) {
  auto walls = polygon_edges({{-0.8, -0.1}, {0.8, -0.1}, {0.8, 1}, {-0.8, 1}});
  walls.push_back(segment(-0.95, -0.1, 0, -1));
  walls.push_back(segment(0, -1, 0.95, -0.1));
  walls.push_back(segment(-0.2, 1, -0.2, 0.45));
  return walls;
}

inline std::vector<Stroke> spiral(Rng&) {
  Stroke s;
  for (int i = 0; i <= 120; ++i) {
    const double t = i / 120.0;
    const double a = t * 5 * kPi;
    s.push_back({t * std::cos(a), t * std::sin(a)});
  }
  return {s};
}

inline std::vector<Stroke> zigzag(Rng&) {
  Stroke s;
  for (int i = 0; i <= 6; ++i) {
    const Stroke seg = segment(-1 + i / 3.0, (i % 2 ? 0.6 : -0.6), -1 + (i + 1) / 3.0, (i % 2 ? -0.6 : 0.6));
    if (i < 6) s.insert(s.end(), seg.begin(), seg.end());
  }
  return {s};
}

inline std::vector<Stroke> face(Rng&) {
  return {arc(0, 0, 1, 0, 2 * kPi, 48), arc(-0.35, -0.3, 0.12, 0, 2 * kPi, 12),
          arc(0.35, -0.3, 0.12, 0, 2 * kPi, 12), arc(0, 0.05, 0.55, 0.2 * kPi, 0.8 * kPi, 16)};
}

inline std::vector<Stroke> arrow(Rng&) {
  return {segment(-1, 0, 1, 0), segment(1, 0, 0.45, -0.5), segment(1, 0, 0.45, 0.5)};
}

/// Random similarity transform plus per-point noise, into canvas units.
inline std::vector<Stroke> place(std::vector<Stroke> strokes, Rng& rng, double size_lo, double size_hi,
                                 double max_rot, double noise) {
  const double radius = (size_lo + (size_hi - size_lo) * rng.uniform()) * kCanvas / 2;
  const double rot = (2 * rng.uniform() - 1) * max_rot;
  const double cx = kCanvas / 2 + (2 * rng.uniform() - 1) * 0.08 * kCanvas;
  const double cy = kCanvas / 2 + (2 * rng.uniform() - 1) * 0.08 * kCanvas;
  const double c = std::cos(rot), s = std::sin(rot);
  for (auto& st : strokes)
    for (auto& p : st) {
      const double x = p.x + noise * rng.normal(), y = p.y + noise * rng.normal();
      p = {cx + radius * (c * x - s * y), cy + radius * (s * x + c * y)};
    }
  return strokes;
}

}  // namespace detail

using ShapeFn = std::function<std::vector<Stroke>(Rng&)>;

struct ShapeClass {
  std::string name;
  ShapeFn draw;
};

inline const std::vector<ShapeClass>& shape_classes() {
  static const std::vector<ShapeClass> classes = {
      {"arrow", detail::arrow},   {"circle", detail::circle}, {"cross", detail::cross},
      {"face", detail::face},     {"house", detail::house},   {"spiral", detail::spiral},
      {"square", detail::square}, {"star", detail::star},     {"triangle", detail::triangle},
      {"zigzag", detail::zigzag},
  };
  return classes;
}

/// `per_class` jittered sketches of each of the first `num_classes` shapes.
/// Ids are "<shape>_<index>" with a zero-padded index.
inline std::vector<StrokeSketch> shapes(std::size_t num_classes, std::size_t per_class, std::uint64_t seed,
                                        const std::string& id_prefix = "") {
  const auto& all = shape_classes();
  if (num_classes < 1 || num_classes > all.size())
    throw ConfigError("synthetic shapes support 1.." + std::to_string(all.size()) + " classes");
  Rng rng(seed);
  std::vector<StrokeSketch> out;
  for (std::size_t c = 0; c < num_classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      StrokeSketch s;
      s.id = id_prefix + all[c].name + "_" + detail::padded(i);
      s.category = all[c].name;
      s.canvas_w = s.canvas_h = kCanvas;
      s.strokes = detail::place(all[c].draw(rng), rng, 0.55, 0.85, 0.3, 0.03);
      out.push_back(std::move(s));
    }
  return out;
}

inline const std::string kOutlineFirst = "outline_first";
inline const std::string kDetailFirst = "detail_first";

/// Two classes that differ only in drawing order. Each pair shares one
/// geometry: a large outline (circle or box) with small interior details.
/// The outline_first member draws the outline before the details, the
/// detail_first member draws the same strokes in the opposite group order,
/// so both render to the same binary image.
inline std::vector<StrokeSketch> stroke_order_pairs(std::size_t pairs, std::uint64_t seed,
                                                    const std::string& id_prefix = "") {
  Rng rng(seed);
  std::vector<StrokeSketch> out;
  for (std::size_t i = 0; i < pairs; ++i) {
    std::vector<Stroke> outline;
    if (rng.bernoulli(0.5)) {
      outline = {detail::arc(0, 0, 1, 0, 2 * detail::kPi, 48)};
    } else {
      const double h = 0.7 + 0.3 * rng.uniform();
      outline = detail::polygon_edges({{-1, -h}, {1, -h}, {1, h}, {-1, h}});
    }
    std::vector<Stroke> details;
    const std::size_t n = 4 + rng.below(3);
    for (std::size_t d = 0; d < n; ++d) {
      const double x = (2 * rng.uniform() - 1) * 0.45, y = (2 * rng.uniform() - 1) * 0.45;
      const double r = 0.08 + 0.1 * rng.uniform();
      if (rng.bernoulli(0.5))
        details.push_back(detail::arc(x, y, r, 0, 2 * detail::kPi, 12));
      else
        details.push_back(detail::segment(x - r, y - r, x + r, y + r, 4));
    }
    std::vector<Stroke> geometry = outline;
    geometry.insert(geometry.end(), details.begin(), details.end());
    geometry = detail::place(std::move(geometry), rng, 0.6, 0.85, 0.2, 0.02);
    const std::vector<Stroke> placed_outline(geometry.begin(), geometry.begin() + outline.size());
    const std::vector<Stroke> placed_details(geometry.begin() + outline.size(), geometry.end());

    const std::string idx = detail::padded(i);
    StrokeSketch a;
    a.id = id_prefix + "pair" + idx + "_a";
    a.category = kOutlineFirst;
    a.canvas_w = a.canvas_h = kCanvas;
    a.strokes = placed_outline;
    a.strokes.insert(a.strokes.end(), placed_details.begin(), placed_details.end());
    StrokeSketch b = a;
    b.id = id_prefix + "pair" + idx + "_b";
    b.category = kDetailFirst;
    b.strokes = placed_details;
    b.strokes.insert(b.strokes.end(), placed_outline.begin(), placed_outline.end());
    out.push_back(std::move(a));
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace sketchnet::synthetic
