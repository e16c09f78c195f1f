#pragma once

#include <cstdio>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sketchnet/ensemble.hpp"
#include "sketchnet/joint_bayes.hpp"
#include "sketchnet/linear.hpp"

namespace sketchnet {

/// Index of the unflipped centre view among the ten evaluation crops.
inline constexpr int kCenterCrop = 4;

enum class FusionMode { Score, Feature, JB };

inline const char* to_string(FusionMode m) {
  switch (m) {
    case FusionMode::Score: return "score";
    case FusionMode::Feature: return "feature";
    case FusionMode::JB: return "jb";
  }
  return "?";
}

inline FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "score") return FusionMode::Score;
  if (s == "feature") return FusionMode::Feature;
  if (s == "jb") return FusionMode::JB;
  throw ConfigError("fusion mode must be score, feature or jb, got '" + s + "'");
}

/// Everything the fusion heads need from one pass of an ensemble over a
/// split: concatenated per-crop features and each member's 10-crop mean
/// softmax per image.
struct EnsembleOutputs {
  FeatureBank bank;
  std::vector<std::vector<std::vector<double>>> distributions;  // [image][member][K]
  std::vector<int> labels;                                      // per image

  std::size_t images() const { return labels.size(); }
};

inline EnsembleOutputs run_ensemble(std::span<const NetworkState<float>> nets, const Dataset& data,
                                    const std::string& split,
                                    const std::function<void(std::size_t)>& on_image = {}) {
  if (nets.empty()) throw ConfigError("no networks to evaluate");
  if (data.sketches.empty()) throw DataError("no sketches to evaluate");
  for (const auto& n : nets)
    if (n.classes != data.classes) throw DataError("checkpoint class list does not match the dataset categories");
  EnsembleOutputs out;
  out.labels = data.labels();
  std::vector<Tensor<float>> blocks;
  for (std::size_t i = 0; i < data.sketches.size(); ++i) {
    const auto& s = data.sketches[i];
    std::vector<Tensor<float>> feats;
    std::vector<std::vector<double>> dists;
    for (const auto& n : nets) {
      auto m = run_member(n, stack(eval_views(s, n.spec.input_channels, n.scale)));
      dists.push_back(mean_rows(m.probabilities));
      feats.push_back(std::move(m.features));
    }
    const std::size_t views = feats[0].dim(0);
    std::size_t width = 0;
    for (const auto& f : feats) width += f.dim(1);
    Tensor<float> rows({views, width});
    for (std::size_t r = 0; r < views; ++r) {
      std::size_t off = 0;
      for (const auto& f : feats) {
        std::copy_n(f.raw() + r * f.dim(1), f.dim(1), rows.raw() + r * width + off);
        off += f.dim(1);
      }
      out.bank.info.push_back({s.id, static_cast<int>(r), out.labels[i], s.category, split});
    }
    blocks.push_back(std::move(rows));
    out.distributions.push_back(std::move(dists));
    if (on_image) on_image(i);
  }
  const std::size_t d = blocks[0].dim(1);
  out.bank.rows = Tensor<float>({out.bank.info.size(), d});
  std::size_t r = 0;
  for (const auto& b : blocks) {
    std::copy_n(b.raw(), b.size(), out.bank.rows.raw() + r * d);
    r += b.dim(0);
  }
  return out;
}

inline int argmax(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Predictions of one ensemble member from its 10-crop mean softmax.
inline std::vector<int> single_predictions(const EnsembleOutputs& o, std::size_t member) {
  std::vector<int> out;
  for (const auto& d : o.distributions) out.push_back(argmax(d.at(member)));
  return out;
}

/// Score fusion over every member.
inline std::vector<int> score_predictions(const EnsembleOutputs& o) {
  std::vector<int> out;
  for (const auto& d : o.distributions) out.push_back(argmax(average_distributions(d)));
  return out;
}

inline FeatureBank center_rows(const FeatureBank& bank) {
  return bank.select([](const FeatureRowInfo& i) { return i.crop == kCenterCrop; });
}

/// Feature fusion: a linear SVM on the centre-crop rows of the training
/// images, applied to the centre-crop rows of the test images.
inline std::vector<int> feature_predictions(const FeatureBank& train, const FeatureBank& test,
                                            const LinearConfig& cfg = {}) {
  const auto tr = center_rows(train), te = center_rows(test);
  if (tr.size() == 0 || te.size() == 0) throw DataError("feature fusion needs centre-crop rows");
  return train_linear_classifier(tr.rows, tr.labels(), cfg).predict_rows(te.rows);
}

/// JB fusion: KNN over every crop of every training image, crop votes
/// combined per test image.
inline std::vector<int> jb_predictions(const JBModel& model, const FeatureBank& train, const FeatureBank& test,
                                       int k = 5) {
  return jb_knn_classify(model, train.rows, train.labels(), test.rows, test.image_groups(), k);
}

inline double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw DataError("prediction and label counts differ");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

/// One row of an accuracy report.
struct ReportRow {
  std::string method;
  std::vector<int> predicted;
};

inline std::string format_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// method,accuracy,correct,total
inline void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows, const std::vector<int>& truth,
                             const std::string& provenance = {}) {
  out << provenance << "method,accuracy,correct,total\n";
  for (const auto& r : rows) {
    const double acc = accuracy(r.predicted, truth);
    const auto correct = static_cast<std::size_t>(std::lround(acc * static_cast<double>(truth.size())));
    out << r.method << ',' << format_fixed(acc) << ',' << correct << ',' << truth.size() << '\n';
  }
}

/// category,count,correct,accuracy
inline void write_per_category_csv(std::ostream& out, const std::vector<int>& predicted, const std::vector<int>& truth,
                                   const std::vector<std::string>& classes, const std::string& provenance = {}) {
  std::vector<std::size_t> count(classes.size(), 0), hit(classes.size(), 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++count.at(truth[i]);
    hit[truth[i]] += predicted[i] == truth[i];
  }
  out << provenance << "category,count,correct,accuracy\n";
  for (std::size_t k = 0; k < classes.size(); ++k) {
    out << classes[k] << ',' << count[k] << ',' << hit[k] << ',';
    out << (count[k] ? format_fixed(static_cast<double>(hit[k]) / static_cast<double>(count[k])) : "") << '\n';
  }
}

/// K x K counts, rows are true categories, columns predicted ones.
inline std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<int>& predicted,
                                                              const std::vector<int>& truth, std::size_t k) {
  std::vector<std::vector<std::size_t>> m(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) ++m.at(truth[i]).at(predicted[i]);
  return m;
}

inline void write_confusion_csv(std::ostream& out, const std::vector<int>& predicted, const std::vector<int>& truth,
                                const std::vector<std::string>& classes, const std::string& provenance = {}) {
  const auto m = confusion_matrix(predicted, truth, classes.size());
  out << provenance << "true\\predicted";
  for (const auto& c : classes) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < classes.size(); ++r) {
    out << classes[r];
    for (auto v : m[r]) out << ',' << v;
    out << '\n';
  }
}

}  // namespace sketchnet
