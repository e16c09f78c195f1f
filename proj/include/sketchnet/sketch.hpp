#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sketchnet/error.hpp"

namespace sketchnet {

struct Point {
  double x = 0;
  double y = 0;
  bool operator==(const Point&) const = default;
};

using Stroke = std::vector<Point>;

/// One free-hand drawing: strokes in the order they were drawn, in
/// abstract canvas units inside a [0, canvas_w] x [0, canvas_h] box.
struct StrokeSketch {
  std::string id;
  std::string category;
  double canvas_w = 1;
  double canvas_h = 1;
  std::vector<Stroke> strokes;

  bool operator==(const StrokeSketch&) const = default;
};

/// Parses one NDJSON record:
/// {"id":..,"category":..,"canvas":[w,h],"strokes":[[[x,y],...],...]}
inline StrokeSketch parse_sketch(std::string_view line, std::size_t lineno = 1) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
  }
  auto fail = [&](const std::string& what) -> StrokeSketch { throw ParseError(lineno, what); };
  if (!j.is_object()) return fail("record is not an object");
  StrokeSketch s;
  if (!j.contains("id") || !j["id"].is_string()) return fail("missing string field 'id'");
  if (!j.contains("category") || !j["category"].is_string())
    return fail("missing string field 'category'");
  s.id = j["id"].get<std::string>();
  s.category = j["category"].get<std::string>();

  const auto& canvas = j.value("canvas", json());
  if (!canvas.is_array() || canvas.size() != 2 || !canvas[0].is_number() || !canvas[1].is_number())
    return fail("'canvas' must be [width, height]");
  s.canvas_w = canvas[0].get<double>();
  s.canvas_h = canvas[1].get<double>();
  if (!(s.canvas_w > 0 && s.canvas_h > 0)) return fail("canvas extents must be positive");

  const auto& strokes = j.value("strokes", json());
  if (!strokes.is_array()) return fail("'strokes' must be an array");
  if (strokes.empty()) return fail("sketch has no strokes");
  for (const auto& st : strokes) {
    if (!st.is_array() || st.empty()) return fail("every stroke needs at least one point");
    Stroke stroke;
    stroke.reserve(st.size());
    for (const auto& p : st) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
        return fail("points must be [x, y] number pairs");
      stroke.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    s.strokes.push_back(std::move(stroke));
  }
  return s;
}

inline std::string serialize_sketch(const StrokeSketch& s) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["id"] = s.id;
  j["category"] = s.category;
  j["canvas"] = {s.canvas_w, s.canvas_h};
  ordered_json strokes = ordered_json::array();
  for (const auto& st : s.strokes) {
    ordered_json pts = ordered_json::array();
    for (const auto& p : st) pts.push_back({p.x, p.y});
    strokes.push_back(std::move(pts));
  }
  j["strokes"] = std::move(strokes);
  return j.dump();
}

/// Sketches plus the sorted category list that defines class indices.
struct Dataset {
  std::vector<StrokeSketch> sketches;
  std::vector<std::string> classes;

  static Dataset from_sketches(std::vector<StrokeSketch> sketches) {
    Dataset d;
    d.sketches = std::move(sketches);
    for (const auto& s : d.sketches) d.classes.push_back(s.category);
    std::sort(d.classes.begin(), d.classes.end());
    d.classes.erase(std::unique(d.classes.begin(), d.classes.end()), d.classes.end());
    return d;
  }

  int label_of(const std::string& category) const {
    auto it = std::lower_bound(classes.begin(), classes.end(), category);
    if (it == classes.end() || *it != category) throw DataError("unknown category '" + category + "'");
    return static_cast<int>(it - classes.begin());
  }

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(sketches.size());
    for (const auto& s : sketches) out.push_back(label_of(s.category));
    return out;
  }

  /// Subset in the order of `ids`, keeping the full class list.
  Dataset subset(const std::vector<std::string>& ids) const {
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < sketches.size(); ++i) pos.emplace(sketches[i].id, i);
    Dataset d;
    d.classes = classes;
    for (const auto& id : ids) {
      auto it = pos.find(id);
      if (it == pos.end()) throw DataError("sketch id '" + id + "' not in dataset");
      d.sketches.push_back(sketches[it->second]);
    }
    return d;
  }
};

/// Reads an NDJSON file; the first malformed line aborts with its number.
inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path);
  std::vector<StrokeSketch> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_sketch(line, lineno));
  }
  if (out.empty()) throw DataError("dataset " + path + " is empty");
  return Dataset::from_sketches(std::move(out));
}

inline void save_dataset(const std::string& path, const std::vector<StrokeSketch>& sketches) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& s : sketches) out << serialize_sketch(s) << '\n';
}

}  // namespace sketchnet
