#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include "sketchnet/augment.hpp"
#include "sketchnet/binary_io.hpp"
#include "sketchnet/blur.hpp"
#include "sketchnet/folds.hpp"
#include "sketchnet/raster.hpp"
#include "sketchnet/sketch.hpp"

using namespace sketchnet;

namespace {

StrokeSketch random_sketch(Rng& rng, std::size_t max_strokes = 12) {
  StrokeSketch s;
  s.id = "r" + std::to_string(rng.next() % 100000);
  s.category = "cat";
  s.canvas_w = 400;
  s.canvas_h = 300;
  const std::size_t n = 1 + rng.below(max_strokes);
  for (std::size_t i = 0; i < n; ++i) {
    Stroke st;
    const std::size_t pts = 1 + rng.below(6);
    for (std::size_t k = 0; k < pts; ++k) st.push_back({rng.uniform() * 400, rng.uniform() * 300});
    s.strokes.push_back(st);
  }
  return s;
}

StrokeSketch strokes_with_lengths(const std::vector<double>& lengths) {
  StrokeSketch s;
  s.canvas_w = s.canvas_h = 100;
  double y = 1;
  for (double len : lengths) {
    s.strokes.push_back({{0, y}, {len, y}});
    y += 1;
  }
  return s;
}

// Brute force over every contiguous 3-way split with non-empty groups.
double best_max_deviation(const std::vector<double>& lengths) {
  const std::size_t n = lengths.size();
  double total = 0;
  for (double l : lengths) total += l;
  double best = 1e300;
  for (std::size_t a = 1; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      double g[3] = {0, 0, 0};
      for (std::size_t i = 0; i < n; ++i) g[i < a ? 0 : i < b ? 1 : 2] += lengths[i];
      double worst = 0;
      for (double v : g) worst = std::max(worst, std::abs(v - total / 3));
      best = std::min(best, worst);
    }
  return best;
}

std::set<std::size_t> ink(const RasterImage& img, std::size_t c) {
  std::set<std::size_t> s;
  auto ch = img.channel(c);
  for (std::size_t i = 0; i < ch.size(); ++i)
    if (ch[i] > 0) s.insert(i);
  return s;
}

double stddev(std::span<const float> v) {
  double m = 0, q = 0;
  for (float x : v) m += x;
  m /= v.size();
  for (float x : v) q += (x - m) * (x - m);
  return std::sqrt(q / v.size());
}

double energy(const RasterImage& img) {
  double e = 0;
  for (float v : img.tensor().data()) e += double(v) * v;
  return e;
}

}  // namespace

// ---------------------------------------------------------------- parsing

TEST(ParseSketch, Basic) {
  auto s = parse_sketch(
      R"({"id":"a1","category":"alarm clock","canvas":[800,800],"strokes":[[[0,0],[10,0]]]})");
  EXPECT_EQ(s.id, "a1");
  EXPECT_EQ(s.category, "alarm clock");
  ASSERT_EQ(s.strokes.size(), 1u);
  EXPECT_EQ(s.strokes[0].size(), 2u);
  EXPECT_EQ(s.strokes[0][1], (Point{10, 0}));
}

TEST(ParseSketch, Errors) {
  EXPECT_THROW(parse_sketch(R"({"id":"a","category":"c","canvas":[1,1],"strokes":[]})"), ParseError);
  EXPECT_THROW(parse_sketch(R"({"id":"a","category":"c","canvas":[1,1],"strokes":[[]]})"), ParseError);
  EXPECT_THROW(parse_sketch(R"({"id":"a","category":"c","canvas":[0,1],"strokes":[[[0,0]]]})"), ParseError);
  EXPECT_THROW(parse_sketch(R"({"id":"a","canvas":[1,1],"strokes":[[[0,0]]]})"), ParseError);
  try {
    parse_sketch("{not json", 42);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 42u);
    EXPECT_NE(std::string(e.what()).find("line 42"), std::string::npos);
  }
}

TEST(ParseSketch, RoundTripProperty) {
  Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    auto s = random_sketch(rng);
    s.canvas_w = 1 + rng.uniform() * 1000;
    auto line = serialize_sketch(s);
    EXPECT_EQ(parse_sketch(line), s);
    EXPECT_EQ(line.find('\n'), std::string::npos);
  }
}

// ---------------------------------------------------------------- stroke groups

TEST(SplitStrokes, EqualLengthsSplitEvenly) {
  auto g = split_strokes(strokes_with_lengths(std::vector<double>(9, 4.0)));
  EXPECT_EQ(g[0].size(), 3u);
  EXPECT_EQ(g[1].size(), 3u);
  EXPECT_EQ(g[2].size(), 3u);
}

TEST(SplitStrokes, Degenerate) {
  auto one = split_strokes(strokes_with_lengths({5}));
  EXPECT_EQ(one[0].size(), 1u);
  EXPECT_TRUE(one[1].empty());
  EXPECT_TRUE(one[2].empty());
  auto two = split_strokes(strokes_with_lengths({5, 2}));
  EXPECT_EQ(two[0].size(), 1u);
  EXPECT_EQ(two[1].size(), 1u);
  EXPECT_TRUE(two[2].empty());
}

TEST(SplitStrokes, ArcLengthExample) {
  const std::vector<double> lengths{5, 1, 1, 1, 1, 5};
  EXPECT_EQ(group_boundaries(lengths), (std::pair<std::size_t, std::size_t>{1, 5}));
  auto g = split_strokes(strokes_with_lengths(lengths));
  EXPECT_EQ(g[0].size(), 1u);
  EXPECT_EQ(g[1].size(), 4u);
  EXPECT_EQ(g[2].size(), 1u);
  EXPECT_NEAR(best_max_deviation(lengths), 14.0 / 3 - 4, 1e-12);
}

TEST(SplitStrokes, MatchesBruteForce) {
  Rng rng(22);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 3 + rng.below(10);
    std::vector<double> lengths(n);
    for (auto& l : lengths) l = rng.bernoulli(0.2) ? 0.0 : rng.uniform() * 10;
    const auto [b1, b2] = group_boundaries(lengths);
    ASSERT_TRUE(1 <= b1 && b1 < b2 && b2 < n);
    double total = 0, g[3] = {0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      total += lengths[i];
      g[i < b1 ? 0 : i < b2 ? 1 : 2] += lengths[i];
    }
    double worst = 0;
    for (double v : g) worst = std::max(worst, std::abs(v - total / 3));
    EXPECT_NEAR(worst, best_max_deviation(lengths), 1e-9);
  }
}

TEST(SplitStrokes, PreservesOrder) {
  Rng rng(23);
  auto s = random_sketch(rng);
  auto g = split_strokes(s);
  std::vector<Stroke> joined;
  for (auto& grp : g) joined.insert(joined.end(), grp.begin(), grp.end());
  EXPECT_EQ(joined, s.strokes);
}

// ---------------------------------------------------------------- rendering

TEST(Render, EmptyGroupIsBlank) {
  auto img = render(std::span<const Stroke>{}, 10, 10);
  EXPECT_EQ(img.ink_count(0), 0u);
  EXPECT_EQ(img.height(), 256u);
}

TEST(Render, HorizontalLinePixelCount) {
  // A stroke across the full canvas width at line width 1.
  StrokeSketch s;
  s.canvas_w = s.canvas_h = 100;
  s.strokes = {{{0, 37.3}, {100, 37.3}}};
  const CanvasTransform tf(100, 100, 256);
  const double length = 100 * tf.scale;
  auto img = render(s, 256, 1);
  EXPECT_NEAR(static_cast<double>(img.ink_count(0)), length, 2.0);
  for (float v : img.tensor().data()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
}

TEST(Render, SinglePointIsDot) {
  RasterImage img(1, 20, 20);
  const Point p{10.4, 7.7};
  draw_polyline(img, 0, std::span<const Point>(&p, 1), 2);
  EXPECT_EQ(img.ink_count(0), 4u);
}

TEST(Render, InvariantToUniformScaling) {
  Rng rng(24);
  for (int i = 0; i < 20; ++i) {
    auto s = random_sketch(rng);
    auto big = s;
    big.canvas_w *= 4;
    big.canvas_h *= 4;
    for (auto& st : big.strokes)
      for (auto& p : st) p = {p.x * 4, p.y * 4};
    EXPECT_EQ(render(s), render(big));
  }
}

TEST(Render, TranslationEquivariantAwayFromEdges) {
  Rng rng(25);
  for (int i = 0; i < 20; ++i) {
    std::vector<Point> pts;
    for (int k = 0; k < 5; ++k) pts.push_back({40 + rng.uniform() * 100, 40 + rng.uniform() * 100});
    std::vector<Point> moved;
    for (auto p : pts) moved.push_back({p.x + 7, p.y - 3});
    RasterImage a(1, 256, 256), b(1, 256, 256);
    draw_polyline(a, 0, pts, 2);
    draw_polyline(b, 0, moved, 2);
    EXPECT_EQ(shift_raster(a, 7, -3), b);
  }
}

// ---------------------------------------------------------------- channels

TEST(MakeChannels, UnionIdentities) {
  Rng rng(26);
  for (int i = 0; i < 30; ++i) {
    auto s = random_sketch(rng);
    auto img = make_channels(s);
    ASSERT_EQ(img.channels(), 6u);
    auto c1 = ink(img, 0), c2 = ink(img, 1), c3 = ink(img, 2);
    auto u = [](std::set<std::size_t> a, const std::set<std::size_t>& b) {
      a.insert(b.begin(), b.end());
      return a;
    };
    EXPECT_EQ(ink(img, 3), u(c1, c2));
    EXPECT_EQ(ink(img, 4), u(c2, c3));
    EXPECT_EQ(ink(img, 5), u(u(c1, c2), c3));
    // Unions rendered directly from the stroke groups agree.
    auto g = split_strokes(s);
    std::vector<Stroke> g12 = g[0];
    g12.insert(g12.end(), g[1].begin(), g[1].end());
    EXPECT_EQ(ink(render(g12, s.canvas_w, s.canvas_h), 0), ink(img, 3));
    EXPECT_EQ(ink(render(s), 0), ink(img, 5));
  }
}

TEST(MakeChannels, SingleStroke) {
  StrokeSketch s;
  s.canvas_w = s.canvas_h = 10;
  s.strokes = {{{1, 1}, {9, 8}}};
  auto img = make_channels(s);
  EXPECT_EQ(img.ink_count(1), 0u);
  EXPECT_EQ(img.ink_count(2), 0u);
  EXPECT_EQ(img.ink_count(4), 0u);
  EXPECT_GT(img.ink_count(0), 0u);
  EXPECT_EQ(ink(img, 0), ink(img, 3));
  EXPECT_EQ(ink(img, 0), ink(img, 5));
}

// ---------------------------------------------------------------- blur

TEST(Blur, IdentityAndConstants) {
  Rng rng(27);
  auto img = make_channels(random_sketch(rng));
  auto same = blur_scale(img, 256);
  for (std::size_t i = 0; i < img.tensor().size(); ++i)
    EXPECT_NEAR(same.tensor()[i], img.tensor()[i], 1e-6);

  RasterImage flat(1, 256, 256);
  flat.tensor().fill(0.37f);
  for (int s : kEnsembleScales) {
    auto out = blur_scale(flat, s);
    for (float v : out.tensor().data()) ASSERT_NEAR(v, 0.37f, 1e-5);
  }
  EXPECT_THROW(blur_scale(flat, 100), ConfigError);
}

TEST(Blur, CheckerboardIsLowPassed) {
  RasterImage board(1, 256, 256);
  for (std::size_t y = 0; y < 256; ++y)
    for (std::size_t x = 0; x < 256; ++x) board.at(0, y, x) = static_cast<float>((x + y) % 2);
  auto out = blur_scale(board, 64);
  EXPECT_LT(stddev(out.channel(0)), 0.25 * stddev(board.channel(0)));
}

TEST(Blur, EnergyNonIncreasingWithScale) {
  Rng rng(28);
  for (int i = 0; i < 10; ++i) {
    auto img = render(random_sketch(rng));
    double prev = energy(img);
    for (int s : kEnsembleScales) {
      auto out = blur_scale(img, s);
      for (float v : out.tensor().data()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
      const double e = energy(out);
      EXPECT_LE(e, prev * (1 + 1e-6)) << "scale " << s;
      prev = e;
    }
  }
}

// ---------------------------------------------------------------- augmentation

TEST(Augment, GridHasExpectedSizeAndNoDuplicates) {
  auto grid = enumerate_grid();
  EXPECT_EQ(grid.size(), 22528u);
  std::set<std::tuple<bool, int, int, int>> seen;
  for (const auto& a : grid) {
    EXPECT_TRUE(a.rotation_degrees >= -5 && a.rotation_degrees <= 5);
    EXPECT_TRUE(a.shift_x >= 0 && a.shift_x <= 31 && a.shift_y >= 0 && a.shift_y <= 31);
    seen.insert({a.flip, a.rotation_degrees, a.shift_x, a.shift_y});
  }
  EXPECT_EQ(seen.size(), 22528u);
}

TEST(Augment, SamplerCoversGrid) {
  Rng rng(29);
  std::set<std::tuple<bool, int, int, int>> seen;
  for (int i = 0; i < 200000; ++i) {
    auto a = sample_augment(rng);
    seen.insert({a.flip, a.rotation_degrees, a.shift_x, a.shift_y});
  }
  // 200k draws over 22,528 cells leave essentially none unvisited.
  EXPECT_GT(seen.size(), 22500u);
}

TEST(Augment, IdentityAndFlipInvolution) {
  Rng rng(30);
  auto s = random_sketch(rng);
  EXPECT_EQ(augment(s, {}), s);
  AugmentParams flip;
  flip.flip = true;
  auto twice = augment(augment(s, flip), flip);
  for (std::size_t i = 0; i < s.strokes.size(); ++i)
    for (std::size_t k = 0; k < s.strokes[i].size(); ++k) {
      EXPECT_NEAR(twice.strokes[i][k].x, s.strokes[i][k].x, 1e-9);
      EXPECT_NEAR(twice.strokes[i][k].y, s.strokes[i][k].y, 1e-9);
    }
  AugmentParams rot;
  rot.rotation_degrees = 5;
  auto r = augment(s, rot);
  // Rotation about the centre preserves distance to the centre.
  const auto& p = s.strokes[0][0];
  const auto& q = r.strokes[0][0];
  EXPECT_NEAR(std::hypot(p.x - 200, p.y - 150), std::hypot(q.x - 200, q.y - 150), 1e-9);
}

TEST(Augment, ShiftClipsInk) {
  RasterImage img(1, 8, 8);
  img.at(0, 0, 7) = 1;
  img.at(0, 3, 3) = 1;
  auto out = shift_raster(img, 2, 1);
  EXPECT_EQ(out.ink_count(0), 1u);
  EXPECT_EQ(out.at(0, 4, 5), 1.0f);
  EXPECT_EQ(shift_displacement(0), -16);
  EXPECT_EQ(shift_displacement(31), 15);
}

// ---------------------------------------------------------------- crops

TEST(Crop, OffsetsAndCount) {
  EXPECT_EQ(crop_offset(CropPosition::Center), (std::pair<std::size_t, std::size_t>{15, 15}));
  EXPECT_EQ(crop_offset(CropPosition::BottomRight), (std::pair<std::size_t, std::size_t>{31, 31}));
  Rng rng(31);
  auto img = render(random_sketch(rng));
  auto crops = ten_crops(img);
  ASSERT_EQ(crops.size(), 10u);
  for (std::size_t i = 0; i < crops.size(); ++i) {
    EXPECT_EQ(crops[i].height(), 225u);
    for (std::size_t j = 0; j < i; ++j) EXPECT_NE(crops[i], crops[j]);
  }
}

TEST(Crop, CornerGeometry) {
  RasterImage img(1, 256, 256);
  img.at(0, 2, 3) = 1;
  EXPECT_EQ(crop(img, CropPosition::TopLeft, false).at(0, 2, 3), 1.0f);
  EXPECT_EQ(crop(img, CropPosition::BottomRight, false).ink_count(0), 0u);
  // Mirrored top-left crop moves the dot to the right edge.
  EXPECT_EQ(crop(img, CropPosition::TopLeft, true).at(0, 2, 224 - 3), 1.0f);
}

// ---------------------------------------------------------------- folds

namespace {
Dataset grid_dataset(int classes, int per_class) {
  std::vector<StrokeSketch> v;
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i) {
      StrokeSketch s;
      s.id = "c" + std::to_string(c) + "_" + std::to_string(i);
      s.category = "class" + std::to_string(c);
      s.strokes = {{{0, 0}}};
      v.push_back(s);
    }
  return Dataset::from_sketches(std::move(v));
}
}  // namespace

TEST(Folds, StratifiedCounts) {
  auto data = grid_dataset(250, 80);
  auto split = make_folds(data, 5);
  std::map<std::string, std::string> cat;
  for (const auto& s : data.sketches) cat[s.id] = s.category;
  std::set<std::string> all;
  for (const auto& fold : split.folds) {
    std::map<std::string, int> per;
    for (const auto& id : fold) {
      ++per[cat[id]];
      EXPECT_TRUE(all.insert(id).second) << "duplicate id " << id;
    }
    for (const auto& [c, n] : per) EXPECT_TRUE(n == 26 || n == 27) << c << " " << n;
  }
  EXPECT_EQ(all.size(), 20000u);
  for (const auto& f : split.folds) EXPECT_TRUE(f.size() == 6666 || f.size() == 6667);
  // Per category the three counts are exactly {26, 27, 27}.
  std::map<std::string, std::multiset<int>> per_cat;
  for (const auto& fold : split.folds) {
    std::map<std::string, int> per;
    for (const auto& id : fold) ++per[cat[id]];
    for (const auto& [c, n] : per) per_cat[c].insert(n);
  }
  for (const auto& [c, counts] : per_cat) EXPECT_EQ(counts, (std::multiset<int>{26, 27, 27}));
}

TEST(Folds, DeterministicAndPersisted) {
  auto data = grid_dataset(5, 7);
  EXPECT_EQ(make_folds(data, 9), make_folds(data, 9));
  EXPECT_NE(make_folds(data, 9), make_folds(data, 10));
  const std::string path = ::testing::TempDir() + "folds.json";
  save_folds(path, make_folds(data, 9));
  EXPECT_EQ(load_folds(path), make_folds(data, 9));
  EXPECT_THROW(make_folds(grid_dataset(2, 2), 1), DataError);
}

// ---------------------------------------------------------------- tensor container

TEST(TensorBlob, LayoutAndRoundTrip) {
  Tensor<float> t({2, 3}, std::vector<float>{1, 2, 3, 4, 5, -6.5f});
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 16u + 4 + 8 + 24);
  EXPECT_EQ(bytes.substr(0, 8), "SKNT0001");
  EXPECT_EQ(bytes.substr(8, 8), std::string(8, '\0'));
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[20]), 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[24]), 3);
  EXPECT_EQ(read_tensor(ss), t);

  std::stringstream cut(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_tensor(cut), DataError);
}
