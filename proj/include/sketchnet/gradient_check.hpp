#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sketchnet/conv.hpp"
#include "sketchnet/layers.hpp"
#include "sketchnet/network.hpp"
#include "sketchnet/rng.hpp"

namespace sketchnet {

enum class GradCheckLayer { Conv, Linear, ReLU, MaxPool, Dropout, SoftmaxCrossEntropy, MicroNetwork };

inline const char* to_string(GradCheckLayer k) {
  switch (k) {
    case GradCheckLayer::Conv: return "conv";
    case GradCheckLayer::Linear: return "linear";
    case GradCheckLayer::ReLU: return "relu";
    case GradCheckLayer::MaxPool: return "maxpool";
    case GradCheckLayer::Dropout: return "dropout";
    case GradCheckLayer::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    case GradCheckLayer::MicroNetwork: return "micro_network";
  }
  return "?";
}

struct GradCheckConfig {
  Shape input_shape{1, 2, 5, 5};  // [N,K] for the softmax loss
  std::size_t filters = 3;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t window = 3;
  std::size_t pool_stride = 2;
  double dropout_rate = 0.5;
  std::uint64_t seed = 7;
};

/// A scaled-down network with every layer kind of the full chain: two
/// pooled convolutions, a convolution covering the whole remaining extent,
/// two 1x1 layers and dropout. Input is [N, channels, 15, 15].
inline NetworkSpec micro_network_spec(std::size_t channels = 2, std::size_t classes = 3) {
  NetworkSpec s;
  s.input_channels = channels;
  s.input_size = 15;
  s.num_classes = classes;
  using L = LayerDesc;
  s.layers = {
      L::conv("L1", 4, 3, 1, 0), L::relu(), L::maxpool(3, 2),  // 13 -> 6
      L::conv("L2", 4, 3, 1, 1), L::relu(), L::maxpool(3, 2),  // 6 -> 2
      L::conv("L3", 6, 2, 1, 0), L::relu(), L::dropout(0.5),   // 1x1
      L::conv("L4", 6, 1, 1, 0), L::relu(), L::dropout(0.5),
      L::conv("L5", classes, 1, 1, 0),
  };
  s.feature_layer = 10;
  return s;
}

namespace detail {

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

// Central differences of `loss` with respect to every value in `slots`.
inline double compare_with_finite_differences(std::vector<double*> slots,
                                              const std::vector<double>& analytic,
                                              const std::function<double()>& loss, double eps) {
  double worst = 0.0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    double& v = *slots[i];
    const double orig = v;
    v = orig + eps;
    const double up = loss();
    v = orig - eps;
    const double down = loss();
    v = orig;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2 * eps)));
  }
  return worst;
}

inline void fill_normal(Tensor<double>& t, Rng& rng, double scale = 1.0) {
  for (auto& v : t.data()) v = rng.normal() * scale;
}

inline double weighted_sum(const Tensor<double>& out, const Tensor<double>& w) {
  double s = 0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
  return s;
}

inline void append(std::vector<double*>& slots, std::vector<double>& analytic, Tensor<double>& value,
                   const Tensor<double>& grad) {
  for (std::size_t i = 0; i < value.size(); ++i) {
    slots.push_back(&value[i]);
    analytic.push_back(grad[i]);
  }
}

}  // namespace detail

/// Largest relative error |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
/// over every input and parameter of one layer kind, evaluated in double
/// precision. Elementwise layers are checked against the loss
/// sum(output * R) for a fixed random R.
inline double gradient_check(GradCheckLayer kind, const GradCheckConfig& cfg, double eps = 1e-4) {
  using detail::append;
  Rng rng(cfg.seed);
  std::vector<double*> slots;
  std::vector<double> analytic;

  switch (kind) {
    case GradCheckLayer::Conv:
    case GradCheckLayer::Linear: {
      const bool linear = kind == GradCheckLayer::Linear;
      Tensor<double> x(cfg.input_shape);
      detail::fill_normal(x, rng);
      const std::size_t k = linear ? 1 : cfg.kernel;
      ConvParams<double> p(cfg.filters, cfg.input_shape.at(1), k, linear ? 1 : cfg.stride,
                           linear ? 0 : cfg.pad);
      detail::fill_normal(p.weights, rng, 0.5);
      detail::fill_normal(p.bias, rng, 0.5);
      Tensor<double> r(conv_forward(x, p).shape());
      detail::fill_normal(r, rng);
      auto g = conv_backward(x, p, r);
      append(slots, analytic, x, g.input);
      append(slots, analytic, p.weights, g.weights);
      append(slots, analytic, p.bias, g.bias);
      return detail::compare_with_finite_differences(
          slots, analytic, [&] { return detail::weighted_sum(conv_forward(x, p), r); }, eps);
    }
    case GradCheckLayer::ReLU: {
      Tensor<double> x(cfg.input_shape);
      for (auto& v : x.data()) v = (rng.bernoulli(0.5) ? 1 : -1) * (0.1 + rng.uniform());
      Tensor<double> r(x.shape());
      detail::fill_normal(r, rng);
      auto g = relu_backward(x, r);
      append(slots, analytic, x, g);
      return detail::compare_with_finite_differences(
          slots, analytic, [&] { return detail::weighted_sum(relu(x), r); }, eps);
    }
    case GradCheckLayer::MaxPool: {
      Tensor<double> x(cfg.input_shape);
      detail::fill_normal(x, rng);
      auto fwd = maxpool_forward(x, cfg.window, cfg.pool_stride);
      Tensor<double> r(fwd.output.shape());
      detail::fill_normal(r, rng);
      auto g = maxpool_backward(fwd.argmax, x.shape(), r);
      append(slots, analytic, x, g);
      return detail::compare_with_finite_differences(
          slots, analytic,
          [&] { return detail::weighted_sum(maxpool_forward(x, cfg.window, cfg.pool_stride).output, r); },
          eps);
    }
    case GradCheckLayer::Dropout: {
      Tensor<double> x(cfg.input_shape);
      detail::fill_normal(x, rng);
      Tensor<double> r(x.shape());
      detail::fill_normal(r, rng);
      const std::uint64_t mask_seed = rng.next();
      auto run = [&] {
        Rng mask_rng(mask_seed);
        return dropout(x, cfg.dropout_rate, Mode::Train, mask_rng);
      };
      auto g = dropout_backward(run().mask, r);
      append(slots, analytic, x, g);
      return detail::compare_with_finite_differences(
          slots, analytic, [&] { return detail::weighted_sum(run().output, r); }, eps);
    }
    case GradCheckLayer::SoftmaxCrossEntropy: {
      Tensor<double> logits(cfg.input_shape);
      detail::fill_normal(logits, rng, 2.0);
      std::vector<int> labels(logits.dim(0));
      for (auto& y : labels) y = static_cast<int>(rng.below(logits.dim(1)));
      auto res = softmax_cross_entropy(logits, labels);
      append(slots, analytic, logits, res.grad);
      return detail::compare_with_finite_differences(
          slots, analytic, [&] { return softmax_cross_entropy(logits, labels).loss; }, eps);
    }
    case GradCheckLayer::MicroNetwork: {
      const auto spec = micro_network_spec(cfg.input_shape.at(1));
      auto st = init_params<double>(spec, cfg.seed);
      st.config.dropout = cfg.dropout_rate;
      for (auto& p : st.params) detail::fill_normal(p.bias, rng, 0.1);
      Tensor<double> x({cfg.input_shape.at(0), spec.input_channels, 15, 15});
      detail::fill_normal(x, rng);
      std::vector<int> labels(x.dim(0));
      for (auto& y : labels) y = static_cast<int>(rng.below(spec.num_classes));
      const std::uint64_t mask_seed = rng.next();
      ForwardCache<double> cache;
      auto run = [&](ForwardCache<double>* c) {
        Rng mask_rng(mask_seed);
        return softmax_cross_entropy(forward(st, x, Mode::Train, &mask_rng, c), labels);
      };
      auto res = run(&cache);
      auto g = backward(st, cache, res.grad, true);
      append(slots, analytic, x, g.input);
      for (std::size_t i = 0; i < st.params.size(); ++i) {
        append(slots, analytic, st.params[i].weights, g.params[i].weights);
        append(slots, analytic, st.params[i].bias, g.params[i].bias);
      }
      return detail::compare_with_finite_differences(slots, analytic,
                                                     [&] { return run(nullptr).loss; }, eps);
    }
  }
  return 0.0;
}

}  // namespace sketchnet
