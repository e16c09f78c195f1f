#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sketchnet/config.hpp"
#include "sketchnet/conv.hpp"
#include "sketchnet/layers.hpp"
#include "sketchnet/rng.hpp"
#include "sketchnet/tensor.hpp"

namespace sketchnet {

enum class LayerKind { Conv, ReLU, MaxPool, Dropout };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::ReLU: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Dropout: return "dropout";
  }
  return "?";
}

struct LayerDesc {
  LayerKind kind = LayerKind::ReLU;
  std::string name;  // conv layers only, e.g. "L1"
  std::size_t filters = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  double rate = 0.0;

  static LayerDesc conv(std::string name, std::size_t filters, std::size_t kernel,
                        std::size_t stride, std::size_t pad) {
    return {LayerKind::Conv, std::move(name), filters, kernel, stride, pad, 0.0};
  }
  static LayerDesc relu() { return {LayerKind::ReLU, {}, 0, 0, 1, 0, 0.0}; }
  static LayerDesc maxpool(std::size_t window, std::size_t stride) {
    return {LayerKind::MaxPool, {}, 0, window, stride, 0, 0.0};
  }
  static LayerDesc dropout(double rate) { return {LayerKind::Dropout, {}, 0, 0, 1, 0, rate}; }
};

/// Ordered layer chain of a network plus its input and output geometry.
struct NetworkSpec {
  std::size_t input_channels = 1;
  std::size_t input_size = 225;
  std::size_t num_classes = 250;
  std::vector<LayerDesc> layers;
  /// Index into `layers` whose output is the feature representation.
  std::size_t feature_layer = 0;

  std::string canonical() const {
    std::string s = "in=" + std::to_string(input_channels) + "x" + std::to_string(input_size) +
                    ";classes=" + std::to_string(num_classes) +
                    ";feature=" + std::to_string(feature_layer);
    for (const auto& l : layers) {
      s += ";";
      s += to_string(l.kind);
      s += ":" + l.name + ":" + std::to_string(l.filters) + ":" + std::to_string(l.kernel) + ":" +
           std::to_string(l.stride) + ":" + std::to_string(l.pad) + ":" + format_number(l.rate);
    }
    return s;
  }

  /// FNV-1a of the canonical text.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  std::vector<std::size_t> conv_layer_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].kind == LayerKind::Conv) idx.push_back(i);
    return idx;
  }
};

/// Channel count and square spatial extent at one point of the chain.
struct ShapeStep {
  std::size_t channels;
  std::size_t size;
  bool operator==(const ShapeStep&) const = default;
};

/// Element 0 is the input; element i+1 is the output of layer i.
inline std::vector<ShapeStep> shape_chain(const NetworkSpec& spec) {
  std::vector<ShapeStep> chain{{spec.input_channels, spec.input_size}};
  for (const auto& l : spec.layers) {
    ShapeStep s = chain.back();
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::MaxPool) {
      if (s.size + 2 * l.pad < l.kernel)
        throw ShapeError("layer window " + std::to_string(l.kernel) + " exceeds input extent " +
                         std::to_string(s.size));
      s.size = window_output_size(s.size, l.kernel, l.stride, l.pad);
      if (l.kind == LayerKind::Conv) s.channels = l.filters;
    }
    chain.push_back(s);
  }
  return chain;
}

inline std::size_t parameter_count(const NetworkSpec& spec) {
  const auto chain = shape_chain(spec);
  std::size_t total = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (l.kind == LayerKind::Conv)
      total += l.kernel * l.kernel * chain[i].channels * l.filters + l.filters;
  }
  return total;
}

/// The eight-layer sketch network: five convolutions (pooling after the
/// first, second and fifth), a 7x7 convolution acting as a fully connected
/// layer, and two 1x1 fully connected layers with 50% dropout before them.
inline NetworkSpec build_network(std::size_t input_channels, std::size_t num_classes = 250) {
  if (input_channels != 1 && input_channels != 6)
    throw ConfigError("input channels must be 1 or 6, got " + std::to_string(input_channels));
  if (num_classes < 2) throw ConfigError("need at least two classes");
  NetworkSpec s;
  s.input_channels = input_channels;
  s.input_size = 225;
  s.num_classes = num_classes;
  using L = LayerDesc;
  s.layers = {
      L::conv("L1", 64, 15, 3, 0),  L::relu(), L::maxpool(3, 2),
      L::conv("L2", 128, 5, 1, 0),  L::relu(), L::maxpool(3, 2),
      L::conv("L3", 256, 3, 1, 1),  L::relu(),
      L::conv("L4", 256, 3, 1, 1),  L::relu(),
      L::conv("L5", 256, 3, 1, 1),  L::relu(), L::maxpool(3, 2),
      L::conv("L6", 512, 7, 1, 0),  L::relu(), L::dropout(0.5),
      L::conv("L7", 512, 1, 1, 0),  L::relu(), L::dropout(0.5),
      L::conv("L8", num_classes, 1, 1, 0),
  };
  s.feature_layer = 17;  // L7 after ReLU
  return s;
}

/// Learned parameters plus provenance of one network.
template <typename T>
struct NetworkState {
  NetworkSpec spec;
  std::vector<ConvParams<T>> params;  // one per conv layer, chain order
  int epoch = 0;
  std::uint64_t seed = 0;
  int scale = 256;
  TrainConfig config;
  std::vector<std::string> classes;

  std::vector<Tensor<T>*> parameter_tensors() {
    std::vector<Tensor<T>*> out;
    for (auto& p : params) {
      out.push_back(&p.weights);
      out.push_back(&p.bias);
    }
    return out;
  }
  std::vector<const Tensor<T>*> parameter_tensors() const {
    std::vector<const Tensor<T>*> out;
    for (const auto& p : params) {
      out.push_back(&p.weights);
      out.push_back(&p.bias);
    }
    return out;
  }
  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (auto i : spec.conv_layer_indices()) {
      out.push_back(spec.layers[i].name + ".weight");
      out.push_back(spec.layers[i].name + ".bias");
    }
    return out;
  }

  template <typename U>
  NetworkState<U> cast() const {
    NetworkState<U> o;
    o.spec = spec;
    o.epoch = epoch;
    o.seed = seed;
    o.scale = scale;
    o.config = config;
    o.classes = classes;
    for (const auto& p : params) {
      ConvParams<U> q;
      q.weights = p.weights.template cast<U>();
      q.bias = p.bias.template cast<U>();
      q.stride = p.stride;
      q.pad = p.pad;
      o.params.push_back(std::move(q));
    }
    return o;
  }
};

/// Zero-filled parameters for every conv layer of a spec.
template <typename T>
std::vector<ConvParams<T>> allocate_params(const NetworkSpec& spec) {
  const auto chain = shape_chain(spec);
  if (chain.back().size != 1 || chain.back().channels != spec.num_classes)
    throw ShapeError("network chain must end in [num_classes, 1, 1]");
  std::vector<ConvParams<T>> params;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (l.kind == LayerKind::Conv) params.emplace_back(l.filters, chain[i].channels, l.kernel, l.stride, l.pad);
  }
  return params;
}

/// The output layer starts this much smaller than the hidden layers so the
/// first softmax is close to uniform.
inline constexpr double kClassifierInitScale = 0.1;

/// Gaussian weights with std sqrt(2 / fan_in), zero biases. The final
/// (classifier) layer uses kClassifierInitScale times that std.
template <typename T = float>
NetworkState<T> init_params(const NetworkSpec& spec, std::uint64_t seed) {
  NetworkState<T> st;
  st.spec = spec;
  st.seed = seed;
  st.params = allocate_params<T>(spec);
  Rng rng(seed);
  for (std::size_t i = 0; i < st.params.size(); ++i) {
    auto& p = st.params[i];
    const double fan_in = static_cast<double>(p.kernel() * p.kernel() * p.in_channels());
    const double std_dev = std::sqrt(2.0 / fan_in) * (i + 1 == st.params.size() ? kClassifierInitScale : 1.0);
    for (auto& w : p.weights.data()) w = static_cast<T>(rng.normal() * std_dev);
  }
  return st;
}

/// Everything the backward pass needs from a training-mode forward pass.
template <typename T>
struct ForwardCache {
  std::vector<Tensor<T>> inputs;  // input of each layer
  std::vector<std::vector<std::size_t>> argmax;
  std::vector<Tensor<T>> masks;
};

namespace detail {

template <typename T>
void check_batch(const NetworkSpec& spec, const Tensor<T>& batch) {
  const Shape& s = batch.shape();
  if (s.size() != 4 || s[1] != spec.input_channels || s[2] != spec.input_size ||
      s[3] != spec.input_size)
    throw ShapeError("network expects [N," + std::to_string(spec.input_channels) + "," +
                     std::to_string(spec.input_size) + "," + std::to_string(spec.input_size) +
                     "] input, got " + shape_str(s));
}

}  // namespace detail

/// Runs layers [0, last] and returns the output of layer `last` as an
/// NCHW tensor. Train mode needs an RNG for dropout.
template <typename T>
Tensor<T> forward_to(const NetworkState<T>& st, const Tensor<T>& batch, std::size_t last,
                     Mode mode, Rng* rng = nullptr, ForwardCache<T>* cache = nullptr) {
  detail::check_batch(st.spec, batch);
  if (mode == Mode::Train && rng == nullptr) throw ConfigError("train-mode forward needs an RNG");
  if (cache) {
    cache->inputs.assign(st.spec.layers.size(), {});
    cache->argmax.assign(st.spec.layers.size(), {});
    cache->masks.assign(st.spec.layers.size(), {});
  }
  Tensor<T> x = batch;
  std::size_t conv_i = 0;
  for (std::size_t i = 0; i <= last && i < st.spec.layers.size(); ++i) {
    const auto& l = st.spec.layers[i];
    Tensor<T> y;
    switch (l.kind) {
      case LayerKind::Conv: y = conv_forward(x, st.params[conv_i++]); break;
      case LayerKind::ReLU: y = relu(x); break;
      case LayerKind::MaxPool: {
        auto r = maxpool_forward(x, l.kernel, l.stride);
        y = std::move(r.output);
        if (cache) cache->argmax[i] = std::move(r.argmax);
        break;
      }
      case LayerKind::Dropout: {
        if (mode == Mode::Eval) {
          y = x;
          break;
        }
        // TrainConfig may override the architectural rate.
        auto r = dropout(x, st.config.dropout, mode, *rng);
        y = std::move(r.output);
        if (cache) cache->masks[i] = std::move(r.mask);
        break;
      }
    }
    if (cache) cache->inputs[i] = std::move(x);
    x = std::move(y);
  }
  return x;
}

/// Eval-mode continuation: runs layers [first, end) on an intermediate
/// activation, e.g. from the feature layer on to the class scores.
template <typename T>
Tensor<T> forward_eval_from(const NetworkState<T>& st, Tensor<T> x, std::size_t first) {
  std::size_t conv_i = 0;
  for (std::size_t i = 0; i < first && i < st.spec.layers.size(); ++i)
    conv_i += st.spec.layers[i].kind == LayerKind::Conv;
  for (std::size_t i = first; i < st.spec.layers.size(); ++i) {
    const auto& l = st.spec.layers[i];
    switch (l.kind) {
      case LayerKind::Conv: x = conv_forward(x, st.params[conv_i++]); break;
      case LayerKind::ReLU: x = relu(x); break;
      case LayerKind::MaxPool: x = maxpool_forward(x, l.kernel, l.stride).output; break;
      case LayerKind::Dropout: break;
    }
  }
  return x;
}

/// Class scores [N, numClasses].
template <typename T>
Tensor<T> forward(const NetworkState<T>& st, const Tensor<T>& batch, Mode mode,
                  Rng* rng = nullptr, ForwardCache<T>* cache = nullptr) {
  Tensor<T> out = forward_to(st, batch, st.spec.layers.size() - 1, mode, rng, cache);
  const std::size_t n = out.dim(0);
  return std::move(out).reshaped({n, st.spec.num_classes});
}

/// Penultimate-layer activations [N, D] in eval mode.
template <typename T>
Tensor<T> extract_features(const NetworkState<T>& st, const Tensor<T>& views) {
  Tensor<T> out = forward_to(st, views, st.spec.feature_layer, Mode::Eval);
  const std::size_t n = out.dim(0);
  const std::size_t d = out.size() / n;
  return std::move(out).reshaped({n, d});
}

template <typename T>
struct NetworkGrads {
  std::vector<ConvParams<T>> params;  // same layout as NetworkState::params
  Tensor<T> input;                    // only filled on request

  std::vector<const Tensor<T>*> tensors() const {
    std::vector<const Tensor<T>*> out;
    for (const auto& p : params) {
      out.push_back(&p.weights);
      out.push_back(&p.bias);
    }
    return out;
  }
};

/// Backpropagates dLoss/dLogits through a cached forward pass.
template <typename T>
NetworkGrads<T> backward(const NetworkState<T>& st, const ForwardCache<T>& cache,
                         const Tensor<T>& grad_logits, bool want_input_grad = false) {
  const auto& layers = st.spec.layers;
  if (cache.inputs.size() != layers.size()) throw ShapeError("backward: forward cache is incomplete");
  Tensor<T> g = grad_logits;
  g.reshape({grad_logits.dim(0), st.spec.num_classes, 1, 1});
  NetworkGrads<T> out;
  out.params.resize(st.params.size());
  std::size_t conv_i = st.params.size();
  for (std::size_t i = layers.size(); i-- > 0;) {
    const auto& l = layers[i];
    const Tensor<T>& in = cache.inputs[i];
    switch (l.kind) {
      case LayerKind::Conv: {
        --conv_i;
        const bool need_input = i > 0 || want_input_grad;
        auto cg = conv_backward(in, st.params[conv_i], g, need_input);
        out.params[conv_i].weights = std::move(cg.weights);
        out.params[conv_i].bias = std::move(cg.bias);
        out.params[conv_i].stride = st.params[conv_i].stride;
        out.params[conv_i].pad = st.params[conv_i].pad;
        g = std::move(cg.input);
        break;
      }
      case LayerKind::ReLU: g = relu_backward(in, g); break;
      case LayerKind::MaxPool: g = maxpool_backward(cache.argmax[i], in.shape(), g); break;
      case LayerKind::Dropout: g = dropout_backward(cache.masks[i], g); break;
    }
  }
  if (want_input_grad) out.input = std::move(g);
  return out;
}

}  // namespace sketchnet
