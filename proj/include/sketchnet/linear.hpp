#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <span>
#include <vector>

#include "sketchnet/error.hpp"
#include "sketchnet/rng.hpp"
#include "sketchnet/tensor.hpp"

namespace sketchnet {

struct LinearConfig {
  double lambda = 1e-4;  // L2 regularization
  int epochs = 60;
  std::uint64_t seed = 1;
};

/// One-vs-all linear SVM on z-scored features. The bias rides along as a
/// constant extra feature.
struct LinearClassifier {
  std::vector<double> mean, scale;  // z-score parameters per feature
  std::vector<double> weights;      // [K, D + 1] row-major
  std::size_t num_classes = 0;
  std::size_t dim = 0;

  std::vector<double> standardize(const float* x) const {
    std::vector<double> z(dim + 1);
    for (std::size_t d = 0; d < dim; ++d) z[d] = (x[d] - mean[d]) * scale[d];
    z[dim] = 1.0;
    return z;
  }

  /// Margins [K] for one feature vector.
  std::vector<double> margins(std::span<const float> x) const {
    if (x.size() != dim) throw ShapeError("linear classifier expects " + std::to_string(dim) + " features, got " +
                                          std::to_string(x.size()));
    const auto z = standardize(x.data());
    std::vector<double> m(num_classes, 0.0);
    for (std::size_t k = 0; k < num_classes; ++k) {
      const double* w = weights.data() + k * (dim + 1);
      for (std::size_t d = 0; d <= dim; ++d) m[k] += w[d] * z[d];
    }
    return m;
  }

  int predict(std::span<const float> x) const {
    const auto m = margins(x);
    return static_cast<int>(std::max_element(m.begin(), m.end()) - m.begin());
  }

  std::vector<int> predict_rows(const Tensor<float>& rows) const {
    std::vector<int> out;
    for (std::size_t r = 0; r < rows.dim(0); ++r)
      out.push_back(predict(std::span<const float>(rows.raw() + r * rows.dim(1), rows.dim(1))));
    return out;
  }
};

/// Pegasos-style stochastic subgradient descent on the one-vs-all hinge
/// loss; step size 1 / (lambda * t).
inline LinearClassifier train_linear_classifier(const Tensor<float>& rows, const std::vector<int>& labels,
                                                const LinearConfig& cfg = {}) {
  require_rank(rows.shape(), 2, "linear classifier features");
  const std::size_t n = rows.dim(0), dim = rows.dim(1);
  if (labels.size() != n) throw DataError("linear classifier: labels and rows differ in count");
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw DataError("linear classifier needs at least two classes");
  if (*distinct.begin() < 0) throw DataError("negative class label");
  if (!(cfg.lambda > 0) || cfg.epochs < 1) throw ConfigError("linear classifier needs lambda > 0 and epochs >= 1");

  LinearClassifier m;
  m.dim = dim;
  m.num_classes = static_cast<std::size_t>(*distinct.rbegin()) + 1;
  m.mean.assign(dim, 0.0);
  m.scale.assign(dim, 1.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t d = 0; d < dim; ++d) m.mean[d] += rows[r * dim + d];
  for (auto& v : m.mean) v /= static_cast<double>(n);
  std::vector<double> var(dim, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t d = 0; d < dim; ++d) {
      const double e = rows[r * dim + d] - m.mean[d];
      var[d] += e * e;
    }
  for (std::size_t d = 0; d < dim; ++d) {
    const double sd = std::sqrt(var[d] / static_cast<double>(n));
    m.scale[d] = sd > 0 ? 1.0 / sd : 0.0;  // constant features carry no signal
  }

  std::vector<std::vector<double>> z(n);
  for (std::size_t r = 0; r < n; ++r) z[r] = m.standardize(rows.raw() + r * dim);

  const std::size_t width = dim + 1;
  m.weights.assign(m.num_classes * width, 0.0);
  std::vector<double> scale_k(m.num_classes, 1.0);  // lazy shrinkage: w_k = scale_k * v_k
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::size_t t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (std::size_t i : order) {
      ++t;
      const double eta = 1.0 / (cfg.lambda * static_cast<double>(t + 1));
      const double shrink = 1.0 - eta * cfg.lambda;
      for (std::size_t k = 0; k < m.num_classes; ++k) {
        double* v = m.weights.data() + k * width;
        double dot = 0;
        for (std::size_t d = 0; d < width; ++d) dot += v[d] * z[i][d];
        const double y = labels[i] == static_cast<int>(k) ? 1.0 : -1.0;
        const bool violated = y * scale_k[k] * dot < 1.0;
        scale_k[k] *= shrink;
        if (violated) {
          const double step = eta * y / scale_k[k];
          for (std::size_t d = 0; d < width; ++d) v[d] += step * z[i][d];
        }
        if (scale_k[k] < 1e-9) {
          for (std::size_t d = 0; d < width; ++d) v[d] *= scale_k[k];
          scale_k[k] = 1.0;
        }
      }
    }
  }
  for (std::size_t k = 0; k < m.num_classes; ++k)
    for (std::size_t d = 0; d < width; ++d) m.weights[k * width + d] *= scale_k[k];
  return m;
}

}  // namespace sketchnet
