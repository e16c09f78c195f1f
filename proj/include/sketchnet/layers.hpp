#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sketchnet/rng.hpp"
#include "sketchnet/tensor.hpp"

namespace sketchnet {

enum class Mode { Train, Eval };

// ---------------------------------------------------------------- ReLU

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.data()) v = v > T{0} ? v : T{0};
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
  require_same_shape(input.shape(), grad_out.shape(), "relu_backward");
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(input[i] > T{0})) g[i] = T{0};
  return g;
}

// ---------------------------------------------------------------- max pooling

template <typename T>
struct PoolResult {
  Tensor<T> output;
  /// Flat index into the input tensor of each output cell's maximum.
  std::vector<std::size_t> argmax;
};

/// Max pooling without padding. Ties resolve to the first element in
/// row-major window order.
template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& input, std::size_t window, std::size_t stride) {
  require_rank(input.shape(), 4, "maxpool_forward");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (window == 0 || stride == 0) throw ShapeError("maxpool window and stride must be positive");
  if (h < window || w < window)
    throw ShapeError("maxpool window " + std::to_string(window) + " larger than input " +
                     shape_str(input.shape()));
  const std::size_t oh = window_output_size(h, window, stride, 0);
  const std::size_t ow = window_output_size(w, window, stride, 0);
  PoolResult<T> r{Tensor<T>({n, c, oh, ow}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = base + oy * stride * w + ox * stride;
        T best_v = input[best];
        for (std::size_t ky = 0; ky < window; ++ky)
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t idx = base + (oy * stride + ky) * w + ox * stride + kx;
            if (input[idx] > best_v) {
              best_v = input[idx];
              best = idx;
            }
          }
        r.output[o] = best_v;
        r.argmax[o] = best;
      }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool_backward(const std::vector<std::size_t>& argmax, const Shape& input_shape,
                           const Tensor<T>& grad_out) {
  if (argmax.size() != grad_out.size())
    throw ShapeError("maxpool_backward: " + std::to_string(argmax.size()) +
                     " argmax entries vs upstream " + shape_str(grad_out.shape()));
  Tensor<T> g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_out[i];
  return g;
}

// ---------------------------------------------------------------- dropout

template <typename T>
struct DropoutResult {
  Tensor<T> output;
  /// Per-element multiplier (0 or 1/(1-rate)); empty when dropout was inactive.
  Tensor<T> mask;
};

/// Inverted dropout: survivors are scaled at train time so evaluation is
/// the identity.
template <typename T>
DropoutResult<T> dropout(const Tensor<T>& input, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  if (mode == Mode::Eval || rate == 0.0) return {input, {}};
  DropoutResult<T> r{input, Tensor<T>(input.shape())};
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T m = rng.uniform() < rate ? T{0} : keep_scale;
    r.mask[i] = m;
    r.output[i] *= m;
  }
  return r;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& mask, const Tensor<T>& grad_out) {
  if (mask.empty()) return grad_out;
  require_same_shape(mask.shape(), grad_out.shape(), "dropout_backward");
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
  return g;
}

// ---------------------------------------------------------------- softmax loss

/// Row-wise softmax of [N, K] logits with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  require_rank(logits.shape(), 2, "softmax");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.raw() + i * k;
    T* out = p.raw() + i * k;
    T m = row[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    T sum = 0;
    for (std::size_t j = 0; j < k; ++j) sum += (out[j] = std::exp(row[j] - m));
    for (std::size_t j = 0; j < k; ++j) out[j] /= sum;
  }
  return p;
}

template <typename T>
struct LossResult {
  T loss;
  Tensor<T> grad;
};

/// Mean negative log-likelihood over the batch and its gradient
/// (softmax - onehot) / N.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     shape_str(logits.shape()) + " logits");
  LossResult<T> r{T{0}, Tensor<T>(logits.shape())};
  const T inv_n = T{1} / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    const T* row = logits.raw() + i * k;
    T m = row[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    T sum = 0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - m);
    const T log_z = m + std::log(sum);
    r.loss += (log_z - row[y]) * inv_n;
    T* g = r.grad.raw() + i * k;
    for (std::size_t j = 0; j < k; ++j) g[j] = std::exp(row[j] - log_z) * inv_n;
    g[y] -= inv_n;
  }
  return r;
}

}  // namespace sketchnet
