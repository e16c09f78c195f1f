#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "sketchnet/config.hpp"
#include "sketchnet/network.hpp"
#include "sketchnet/optim.hpp"
#include "sketchnet/pipeline.hpp"
#include "sketchnet/sketch.hpp"

namespace sketchnet {

struct EpochStats {
  int epoch = 0;  // 1-based
  double loss = 0;
  double train_accuracy = 0;
  double val_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  NetworkState<float> state;
  std::vector<EpochStats> history;
  /// Loss of the very first batch, before any parameter update.
  double initial_loss = std::numeric_limits<double>::quiet_NaN();
};

inline constexpr std::size_t kEvalChunk = 32;

/// Eval-mode logits for a list of views, processed in bounded chunks.
inline Tensor<float> batched_logits(const NetworkState<float>& st, const std::vector<RasterImage>& views) {
  Tensor<float> out({views.size(), st.spec.num_classes});
  for (std::size_t i = 0; i < views.size(); i += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, views.size() - i);
    std::vector<RasterImage> part(views.begin() + i, views.begin() + i + n);
    auto logits = forward(st, stack(part), Mode::Eval);
    std::copy(logits.data().begin(), logits.data().end(), out.raw() + i * st.spec.num_classes);
  }
  return out;
}

inline std::size_t argmax_row(const Tensor<float>& m, std::size_t row) {
  const std::size_t k = m.dim(1);
  const float* r = m.raw() + row * k;
  return static_cast<std::size_t>(std::max_element(r, r + k) - r);
}

/// Centre-crop accuracy of one network on a labelled set.
inline double center_crop_accuracy(const NetworkState<float>& st, const Dataset& data) {
  if (data.sketches.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<RasterImage> views;
  for (const auto& s : data.sketches)
    views.push_back(crop(prepare_image(s, st.spec.input_channels, st.scale), CropPosition::Center, false));
  const auto logits = batched_logits(st, views);
  const auto labels = data.labels();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    correct += argmax_row(logits, i) == static_cast<std::size_t>(labels[i]);
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

using EpochCallback = std::function<void(const EpochStats&)>;

/// Minibatch SGD at one blur scale. Every sample of every batch is a fresh
/// random augmentation. Deterministic in cfg.seed for a given dataset order.
inline TrainResult train(NetworkState<float> state, const Dataset& data, const TrainConfig& cfg, int scale,
                         const Dataset* validation = nullptr, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (data.sketches.empty()) throw DataError("training set is empty");
  if (!is_ensemble_scale(scale)) throw ConfigError("unknown blur scale " + std::to_string(scale));
  if (data.classes.size() != state.spec.num_classes)
    throw DataError("dataset has " + std::to_string(data.classes.size()) + " classes, network has " +
                    std::to_string(state.spec.num_classes));

  state.scale = scale;
  state.config = cfg;
  state.classes = data.classes;
  const auto labels = data.labels();
  const std::size_t channels = state.spec.input_channels;
  Rng rng(cfg.seed);
  OptimState<float> opt;
  opt.momentum = cfg.momentum;
  opt.weight_decay = cfg.weight_decay;

  TrainResult result;
  std::vector<std::size_t> order(data.sketches.size());
  std::size_t iteration = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.learning_rate = cfg.learning_rate_at(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t nb = std::min<std::size_t>(cfg.batch_size, order.size() - b0);
      std::vector<RasterImage> views;
      std::vector<int> y;
      for (std::size_t i = 0; i < nb; ++i) {
        const std::size_t idx = order[b0 + i];
        views.push_back(training_view(data.sketches[idx], channels, scale, rng, cfg.augment));
        y.push_back(labels[idx]);
      }
      ForwardCache<float> cache;
      auto logits = forward(state, stack(views), Mode::Train, &rng, &cache);
      auto loss = softmax_cross_entropy(logits, y);
      ++iteration;
      if (!std::isfinite(loss.loss))
        throw NumericError("training diverged at iteration " + std::to_string(iteration) + " (epoch " +
                           std::to_string(epoch + 1) + "): loss is not finite");
      if (iteration == 1) result.initial_loss = loss.loss;
      loss_sum += static_cast<double>(loss.loss) * static_cast<double>(nb);
      for (std::size_t i = 0; i < nb; ++i) correct += argmax_row(logits, i) == static_cast<std::size_t>(y[i]);
      auto grads = backward(state, cache, loss.grad);
      sgd_step(state.parameter_tensors(), grads.tensors(), opt);
    }
    state.epoch = epoch + 1;
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.loss = loss_sum / static_cast<double>(order.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (validation) stats.val_accuracy = center_crop_accuracy(state, *validation);
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  result.state = std::move(state);
  return result;
}

/// CSV history: optional "# key=value" provenance lines, then
/// epoch,loss,trainAcc,valAcc.
inline void write_history_csv(std::ostream& out, const std::vector<EpochStats>& history,
                              const std::string& provenance = {}) {
  out << provenance;
  out << "epoch,loss,trainAcc,valAcc\n";
  char buf[160];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.6f,%.6f\n", h.epoch, h.loss, h.train_accuracy, h.val_accuracy);
    out << buf;
  }
}

}  // namespace sketchnet
