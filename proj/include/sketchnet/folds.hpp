#pragma once

#include <array>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sketchnet/rng.hpp"
#include "sketchnet/sketch.hpp"

namespace sketchnet {

inline constexpr std::size_t kNumFolds = 3;

/// Three disjoint lists of sketch ids covering a dataset.
struct FoldSplit {
  std::uint64_t seed = 0;
  std::array<std::vector<std::string>, kNumFolds> folds;

  /// Ids of every fold except `test_fold`, in fold order.
  std::vector<std::string> train_ids(std::size_t test_fold) const {
    check(test_fold);
    std::vector<std::string> ids;
    for (std::size_t f = 0; f < kNumFolds; ++f)
      if (f != test_fold) ids.insert(ids.end(), folds[f].begin(), folds[f].end());
    return ids;
  }
  const std::vector<std::string>& test_ids(std::size_t test_fold) const {
    check(test_fold);
    return folds[test_fold];
  }

  bool operator==(const FoldSplit&) const = default;

 private:
  static void check(std::size_t f) {
    if (f >= kNumFolds) throw ConfigError("fold index must be 0, 1 or 2");
  }
};

/// Stratified random 3-way split. Within each category the sketches are
/// shuffled and dealt round-robin; the starting fold rotates per category
/// so fold totals stay balanced too.
inline FoldSplit make_folds(const Dataset& data, std::uint64_t seed) {
  std::map<std::string, std::vector<std::string>> by_class;
  for (const auto& s : data.sketches) by_class[s.category].push_back(s.id);
  FoldSplit split;
  split.seed = seed;
  Rng rng(seed);
  std::size_t start = 0;
  for (auto& [category, ids] : by_class) {
    if (ids.size() < kNumFolds)
      throw DataError("category '" + category + "' has fewer than 3 sketches");
    std::sort(ids.begin(), ids.end());
    rng.shuffle(ids);
    for (std::size_t i = 0; i < ids.size(); ++i) split.folds[(start + i) % kNumFolds].push_back(ids[i]);
    start = (start + ids.size()) % kNumFolds;
  }
  return split;
}

/// Writes {"seed", "folds"} plus optional key=value provenance pairs.
inline void save_folds(const std::string& path, const FoldSplit& split,
                       const std::vector<std::pair<std::string, std::string>>& provenance = {}) {
  nlohmann::ordered_json j;
  j["seed"] = split.seed;
  if (!provenance.empty()) {
    nlohmann::ordered_json p = nlohmann::ordered_json::object();
    for (const auto& [k, v] : provenance) p[k] = v;
    j["provenance"] = std::move(p);
  }
  j["folds"] = split.folds;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(1) << '\n';
}

inline FoldSplit load_folds(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open folds file " + path);
  try {
    const auto j = nlohmann::json::parse(in);
    FoldSplit split;
    split.seed = j.at("seed").get<std::uint64_t>();
    const auto& folds = j.at("folds");
    if (!folds.is_array() || folds.size() != kNumFolds) throw DataError("folds file needs 3 folds");
    for (std::size_t f = 0; f < kNumFolds; ++f) split.folds[f] = folds[f].get<std::vector<std::string>>();
    return split;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed folds file " + path + ": " + e.what());
  }
}

}  // namespace sketchnet
