#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sketchnet/binary_io.hpp"
#include "sketchnet/blur.hpp"
#include "sketchnet/network.hpp"
#include "sketchnet/pipeline.hpp"
#include "sketchnet/sketch.hpp"

namespace sketchnet {

/// Five networks of one input variant, one per blur scale, held in the
/// fixed order 256, 224, 192, 128, 64.
struct EnsembleModel {
  std::vector<NetworkState<float>> members;

  /// Validates and reorders: scales must be exactly the five ensemble
  /// scales, and all members must share channels and class list.
  static EnsembleModel from_members(std::vector<NetworkState<float>> nets) {
    if (nets.size() != kEnsembleScales.size())
      throw ConfigError("an ensemble needs " + std::to_string(kEnsembleScales.size()) + " networks, got " +
                        std::to_string(nets.size()));
    EnsembleModel e;
    for (int scale : kEnsembleScales) {
      auto it = std::find_if(nets.begin(), nets.end(), [&](const auto& n) { return n.scale == scale; });
      if (it == nets.end()) throw ConfigError("ensemble is missing the scale-" + std::to_string(scale) + " network");
      e.members.push_back(std::move(*it));
      nets.erase(it);
    }
    for (const auto& m : e.members)
      if (m.spec.hash() != e.members[0].spec.hash() || m.classes != e.members[0].classes)
        throw ConfigError("ensemble members disagree on architecture or class list");
    return e;
  }

  std::size_t channels() const { return members.at(0).spec.input_channels; }
  const std::vector<std::string>& classes() const { return members.at(0).classes; }
};

/// Eval-mode penultimate features and class distributions for a batch of
/// views, from a single forward pass.
struct MemberOutputs {
  Tensor<float> features;        // [V, D]
  Tensor<double> probabilities;  // [V, K]
};

inline MemberOutputs run_member(const NetworkState<float>& net, const Tensor<float>& views) {
  Tensor<float> act = forward_to(net, views, net.spec.feature_layer, Mode::Eval);
  const std::size_t v = act.dim(0), d = act.size() / v;
  const Tensor<float> logits = forward_eval_from(net, act, net.spec.feature_layer + 1);
  MemberOutputs out;
  out.features = std::move(act).reshaped({v, d});
  out.probabilities = softmax(logits.reshaped({v, net.spec.num_classes}).cast<double>());
  return out;
}

/// Mean of the rows of a [V, K] distribution matrix.
inline std::vector<double> mean_rows(const Tensor<double>& p) {
  std::vector<double> out(p.dim(1), 0.0);
  for (std::size_t r = 0; r < p.dim(0); ++r)
    for (std::size_t k = 0; k < p.dim(1); ++k) out[k] += p[r * p.dim(1) + k];
  for (auto& v : out) v /= static_cast<double>(p.dim(0));
  return out;
}

/// Element-wise mean of equally long distributions.
inline std::vector<double> average_distributions(std::span<const std::vector<double>> dists) {
  if (dists.empty()) throw ConfigError("nothing to fuse");
  std::vector<double> out(dists[0].size(), 0.0);
  for (const auto& d : dists) {
    if (d.size() != out.size()) throw ShapeError("distributions of different lengths");
    for (std::size_t k = 0; k < d.size(); ++k) out[k] += d[k];
  }
  for (auto& v : out) v /= static_cast<double>(dists.size());
  return out;
}

/// One network's 10-crop mean softmax for a sketch.
inline std::vector<double> member_distribution(const NetworkState<float>& net, const StrokeSketch& s) {
  return mean_rows(run_member(net, stack(eval_views(s, net.spec.input_channels, net.scale))).probabilities);
}

/// Score-level fusion: the mean softmax over networks and the ten crops.
inline std::vector<double> score_fusion(std::span<const NetworkState<float>> nets, const StrokeSketch& s) {
  std::vector<std::vector<double>> d;
  for (const auto& n : nets) d.push_back(member_distribution(n, s));
  return average_distributions(d);
}

/// Concatenates per-network features of matching views. `views[i]` is the
/// batch for network i (each network sees its own blur scale).
inline Tensor<float> concat_features(std::span<const NetworkState<float>> nets,
                                     std::span<const Tensor<float>> views) {
  if (nets.size() != views.size() || nets.empty()) throw ShapeError("one view batch per network is required");
  std::vector<Tensor<float>> parts;
  std::size_t total = 0;
  for (std::size_t i = 0; i < nets.size(); ++i) {
    parts.push_back(extract_features(nets[i], views[i]));
    if (parts.back().dim(0) != parts[0].dim(0)) throw ShapeError("view batches differ in size");
    total += parts.back().dim(1);
  }
  const std::size_t rows = parts[0].dim(0);
  Tensor<float> out({rows, total});
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      std::copy_n(p.raw() + r * p.dim(1), p.dim(1), out.raw() + r * total + off);
      off += p.dim(1);
    }
  }
  return out;
}

/// The ten crop rows [10, 512 * nets] of one sketch.
inline Tensor<float> concat_features(std::span<const NetworkState<float>> nets, const StrokeSketch& s) {
  std::vector<Tensor<float>> views;
  for (const auto& n : nets) views.push_back(stack(eval_views(s, n.spec.input_channels, n.scale)));
  return concat_features(nets, views);
}

// ----------------------------------------------------------- feature bank

struct FeatureRowInfo {
  std::string id;
  int crop = 0;
  int label = -1;
  std::string category;
  std::string split;

  bool operator==(const FeatureRowInfo&) const = default;
};

/// Per-crop feature rows with their provenance.
struct FeatureBank {
  Tensor<float> rows;  // [R, D]
  std::vector<FeatureRowInfo> info;

  std::size_t size() const { return info.size(); }
  std::size_t dim() const { return rows.rank() == 2 ? rows.dim(1) : 0; }

  std::vector<int> labels() const {
    std::vector<int> out;
    for (const auto& i : info) out.push_back(i.label);
    return out;
  }

  /// Row indices grouped by image, in order of first appearance.
  std::vector<std::vector<std::size_t>> image_groups() const {
    std::vector<std::vector<std::size_t>> groups;
    std::map<std::string, std::size_t> at;
    for (std::size_t r = 0; r < info.size(); ++r) {
      auto [it, fresh] = at.emplace(info[r].id, groups.size());
      if (fresh) groups.emplace_back();
      groups[it->second].push_back(r);
    }
    return groups;
  }

  /// Rows whose predicate holds, in order.
  FeatureBank select(const std::function<bool(const FeatureRowInfo&)>& keep) const {
    std::vector<std::size_t> idx;
    for (std::size_t r = 0; r < info.size(); ++r)
      if (keep(info[r])) idx.push_back(r);
    FeatureBank out;
    if (idx.empty()) return out;
    out.rows = Tensor<float>({idx.size(), dim()});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::copy_n(rows.raw() + idx[i] * dim(), dim(), out.rows.raw() + i * dim());
      out.info.push_back(info[idx[i]]);
    }
    return out;
  }
};

/// Features of every crop of every sketch in `data`, tagged with `split`.
/// `on_image` (optional) is called after each sketch with its index.
inline FeatureBank build_feature_bank(std::span<const NetworkState<float>> nets, const Dataset& data,
                                      const std::string& split,
                                      const std::function<void(std::size_t)>& on_image = {}) {
  if (data.sketches.empty()) throw DataError("no sketches to featurize");
  std::vector<Tensor<float>> blocks;
  FeatureBank bank;
  const auto labels = data.labels();
  for (std::size_t i = 0; i < data.sketches.size(); ++i) {
    blocks.push_back(concat_features(nets, data.sketches[i]));
    for (std::size_t c = 0; c < blocks.back().dim(0); ++c)
      bank.info.push_back({data.sketches[i].id, static_cast<int>(c), labels[i], data.sketches[i].category, split});
    if (on_image) on_image(i);
  }
  const std::size_t d = blocks[0].dim(1);
  bank.rows = Tensor<float>({bank.info.size(), d});
  std::size_t r = 0;
  for (const auto& b : blocks) {
    std::copy_n(b.raw(), b.size(), bank.rows.raw() + r * d);
    r += b.dim(0);
  }
  return bank;
}

/// Writes `<prefix>.sknt` (rows) and `<prefix>.ndjson` (one record per
/// row: id, crop, label, category, split).
inline void save_feature_bank(const FeatureBank& bank, const std::string& prefix) {
  save_tensor(prefix + ".sknt", bank.rows);
  std::ofstream out(prefix + ".ndjson");
  if (!out) throw DataError("cannot write " + prefix + ".ndjson");
  for (const auto& i : bank.info) {
    nlohmann::ordered_json j;
    j["id"] = i.id;
    j["crop"] = i.crop;
    j["label"] = i.label;
    j["category"] = i.category;
    j["split"] = i.split;
    out << j.dump() << '\n';
  }
}

inline FeatureBank load_feature_bank(const std::string& prefix) {
  FeatureBank bank;
  bank.rows = load_tensor(prefix + ".sknt");
  std::ifstream in(prefix + ".ndjson");
  if (!in) throw DataError("cannot open " + prefix + ".ndjson");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      bank.info.push_back({j.at("id").get<std::string>(), j.at("crop").get<int>(), j.at("label").get<int>(),
                           j.at("category").get<std::string>(), j.at("split").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  if (bank.rows.rank() != 2 || bank.rows.dim(0) != bank.info.size())
    throw DataError("feature bank " + prefix + ": " + std::to_string(bank.info.size()) +
                    " sidecar records for tensor " + shape_str(bank.rows.shape()));
  return bank;
}

}  // namespace sketchnet
