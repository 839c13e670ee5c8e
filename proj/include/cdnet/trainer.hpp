#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "cdnet/metrics.hpp"
#include "cdnet/network.hpp"

namespace cdnet {

struct TrainConfig {
  double lr_phase1 = 1e-4;
  std::size_t phase1_epochs = 35;
  double lr_phase2 = 1e-5;
  std::size_t total_epochs = 100;
  std::size_t plateau_patience = 5;
  double plateau_factor = 0.5;
  std::size_t early_stop_patience = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Learning-rate bookkeeping: two-phase base rate plus halving on plateau.
struct ScheduleState {
  double lr = 0.0;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t plateau_count = 0;
  std::size_t stall_count = 0;  // early-stopping counter
  std::size_t epoch = 0;        // last epoch handed out by lr_schedule
};

/// Learning rate for `epoch` (1-based). `previous_loss` is the monitored loss of
/// epoch - 1 (ignored for epoch 1). The phase-2 rate replaces the current rate at
/// epoch phase1_epochs + 1; afterwards halving continues from it.
double lr_schedule(const TrainConfig& cfg, ScheduleState& state, std::size_t epoch,
                   double previous_loss);

template <typename T>
struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
};

template <typename T>
struct TrainState {
  ScheduleState schedule;
  AdamState<T> adam;
};

/// One bias-corrected Adam update at `lr`, then gradients are cleared.
/// Throws Error naming the parameter when a gradient is missing or not finite.
template <typename T>
void adam_step(ParamStore<T>& store, AdamState<T>& state, double lr, const TrainConfig& cfg);

template <typename T>
struct Sample {
  Tensor<T> image;  // 1 x C x H x W
  Tensor<T> mask;   // 1 x 1 x H x W, values in {0, 1}
};

struct EpochRecord {
  std::size_t epoch = 0;
  double total_loss = 0.0;
  double output_loss = 0.0;
  double supervision_loss = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  bool early_stopped = false;
};

/// Called after each epoch; returning false stops training.
using EpochCallback = std::function<bool(const EpochRecord&)>;

template <typename T>
TrainHistory train(Network<T>& net, const std::vector<Sample<T>>& dataset, const TrainConfig& cfg,
                   const LossConfig& loss_cfg, const EpochCallback& on_epoch = {});

/// Loss terms and gradients of one batch, without an optimizer step.
template <typename T>
TotalLoss<T> compute_gradients(Network<T>& net, const Tensor<T>& images, const Tensor<T>& masks,
                               const LossConfig& loss_cfg);

template <typename T>
Tensor<T> stack_batch(const std::vector<const Tensor<T>*>& items);

struct EvalOptions {
  double threshold = kDefaultThreshold;
  bool micro = false;
  bool with_auc = true;
};

/// Per-slice metrics aggregated over the dataset; AUCs pooled over all pixels.
template <typename T>
AggregateReport evaluate(const Network<T>& net, const std::vector<Sample<T>>& dataset,
                         const EvalOptions& opts = {});

/// Same aggregation over precomputed prediction maps.
template <typename T>
AggregateReport evaluate_predictions(const std::vector<Tensor<T>>& preds,
                                     const std::vector<Tensor<T>>& truths,
                                     const EvalOptions& opts = {});

}  // namespace cdnet
