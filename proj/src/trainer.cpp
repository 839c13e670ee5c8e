#include "cdnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace cdnet {

void TrainConfig::validate() const {
  if (!(lr_phase1 > 0.0) || !(lr_phase2 > 0.0)) throw ConfigError("TrainConfig: learning rates must be > 0");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) {
    throw ConfigError("TrainConfig: plateau_factor must lie in (0, 1)");
  }
  if (total_epochs > 0 && phase1_epochs >= total_epochs) {
    throw ConfigError("TrainConfig: phase1_epochs must be < total_epochs");
  }
  if (batch_size == 0) throw ConfigError("TrainConfig: batch_size must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("TrainConfig: Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("TrainConfig: adam_eps must be > 0");
}

double lr_schedule(const TrainConfig& cfg, ScheduleState& s, std::size_t epoch,
                   double previous_loss) {
  if (epoch <= 1 || s.epoch == 0) {
    s = ScheduleState{};
    s.lr = cfg.lr_phase1;
    s.epoch = 1;
    if (epoch <= 1) return s.lr;
  }
  if (previous_loss < s.best_loss) {
    s.best_loss = previous_loss;
    s.plateau_count = 0;
    s.stall_count = 0;
  } else {
    ++s.plateau_count;
    ++s.stall_count;
    if (cfg.plateau_patience > 0 && s.plateau_count >= cfg.plateau_patience) {
      s.lr *= cfg.plateau_factor;
      s.plateau_count = 0;
    }
  }
  if (epoch == cfg.phase1_epochs + 1) s.lr = cfg.lr_phase2;
  s.epoch = epoch;
  return s.lr;
}

template <typename T>
void adam_step(ParamStore<T>& store, AdamState<T>& state, double lr, const TrainConfig& cfg) {
  if (state.m.size() != store.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& e : store.entries()) {
      state.m.emplace_back(e.param.value.shape());
      state.v.emplace_back(e.param.value.shape());
    }
  }
  for (const auto& e : store.entries()) {
    if (e.param.grad.shape() != e.param.value.shape()) {
      throw Error("adam_step: missing gradient for parameter " + e.name);
    }
    if (!e.param.grad.all_finite()) {
      throw NumericError("adam_step: non-finite gradient for parameter " + e.name);
    }
  }
  ++state.step;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t id = 0; id < store.size(); ++id) {
    Tensor<T>& w = store.value(id);
    Tensor<T>& g = store.grad(id);
    Tensor<T>& m = state.m[id];
    Tensor<T>& v = state.v[id];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / c1;
      const double vhat = vi / c2;
      w[i] = static_cast<T>(w[i] - lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
    }
    g.zero();
  }
}

template <typename T>
Tensor<T> stack_batch(const std::vector<const Tensor<T>*>& items) {
  if (items.empty()) throw ShapeError("stack_batch: empty batch");
  const Shape s = items.front()->shape();
  Tensor<T> out(items.size() * s.n, s.c, s.h, s.w);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i]->shape() != s) {
      throw ShapeError("stack_batch: item " + std::to_string(i) + " has shape " +
                       items[i]->shape().str() + ", expected " + s.str());
    }
    std::copy(items[i]->vec().begin(), items[i]->vec().end(), out.data() + i * s.numel());
  }
  return out;
}

template <typename T>
TotalLoss<T> compute_gradients(Network<T>& net, const Tensor<T>& images, const Tensor<T>& masks,
                               const LossConfig& loss_cfg) {
  typename Network<T>::Tape tape;
  ForwardOutputs<T> out = net.forward_train(images, tape);
  TotalLoss<T> loss = total_loss(out, masks, loss_cfg);
  if (std::isfinite(loss.total)) net.backward(tape, loss);
  return loss;
}

template <typename T>
TrainHistory train(Network<T>& net, const std::vector<Sample<T>>& dataset, const TrainConfig& cfg,
                   const LossConfig& loss_cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  loss_cfg.validate();
  if (dataset.empty()) throw ConfigError("train: dataset is empty");
  const NetworkConfig& nc = net.config();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Shape want{1, nc.input_channels, nc.input_h, nc.input_w};
    if (dataset[i].image.shape() != want || dataset[i].mask.shape() != Shape{1, 1, nc.input_h, nc.input_w}) {
      throw ShapeError("train: sample " + std::to_string(i) + " has image " +
                       dataset[i].image.shape().str() + " / mask " + dataset[i].mask.shape().str() +
                       ", expected " + want.str());
    }
    if (!dataset[i].image.all_finite() || !dataset[i].mask.all_finite()) {
      throw NumericError("train: sample " + std::to_string(i) + " contains non-finite values");
    }
  }

  TrainHistory history;
  TrainState<T> state;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  double previous = 0.0;
  net.store().zero_grad();

  for (std::size_t epoch = 1; epoch <= cfg.total_epochs; ++epoch) {
    const double lr = lr_schedule(cfg, state.schedule, epoch, previous);
    if (epoch > 1 && cfg.early_stop_patience > 0 &&
        state.schedule.stall_count >= cfg.early_stop_patience) {
      history.early_stopped = true;
      break;
    }
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Tensor<T>*> imgs;
      std::vector<const Tensor<T>*> masks;
      for (std::size_t i = start; i < end; ++i) {
        imgs.push_back(&dataset[order[i]].image);
        masks.push_back(&dataset[order[i]].mask);
      }
      TotalLoss<T> loss = compute_gradients(net, stack_batch(imgs), stack_batch(masks), loss_cfg);
      if (!std::isfinite(loss.total)) {
        std::ostringstream os;
        os << "train: non-finite loss at epoch " << epoch << ", batch " << batch_index
           << " (total=" << loss.total << ", output=" << loss.output
           << ", supervision=" << loss.supervision << ")";
        throw NumericError(os.str());
      }
      try {
        adam_step(net.store(), state.adam, lr, cfg);
      } catch (const NumericError& e) {
        throw NumericError("train: epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) +
                           ": " + e.what());
      }
      const double w = static_cast<double>(end - start) / static_cast<double>(order.size());
      rec.total_loss += w * loss.total;
      rec.output_loss += w * loss.output;
      rec.supervision_loss += w * loss.supervision;
    }
    history.epochs.push_back(rec);
    previous = rec.total_loss;
    if (on_epoch && !on_epoch(rec)) break;
  }
  return history;
}

template <typename T>
AggregateReport evaluate_predictions(const std::vector<Tensor<T>>& preds,
                                     const std::vector<Tensor<T>>& truths, const EvalOptions& opts) {
  if (preds.empty()) throw UndefinedError("evaluate: empty dataset");
  if (preds.size() != truths.size()) {
    throw ShapeError("evaluate: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(truths.size()) + " truth masks");
  }
  std::vector<ConfusionCounts> counts;
  std::vector<ScoredLabel> pooled;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].shape() != truths[i].shape()) {
      throw ShapeError("evaluate: slice " + std::to_string(i) + " prediction " +
                       preds[i].shape().str() + " vs truth " + truths[i].shape().str());
    }
    counts.push_back(confusion_counts(preds[i].span(), truths[i].span(), opts.threshold));
    if (opts.with_auc) {
      for (std::size_t k = 0; k < preds[i].size(); ++k) {
        pooled.push_back({static_cast<double>(preds[i][k]), truths[i][k] != T(0)});
      }
    }
  }
  AggregateReport r = aggregate(counts, opts.micro);
  if (opts.with_auc) {
    try {
      r.mean.roc_auc = roc_auc(pooled);
    } catch (const UndefinedError&) {
    }
    try {
      r.mean.pr_auc = pr_auc(pooled);
    } catch (const UndefinedError&) {
    }
  }
  return r;
}

template <typename T>
AggregateReport evaluate(const Network<T>& net, const std::vector<Sample<T>>& dataset,
                         const EvalOptions& opts) {
  if (dataset.empty()) throw UndefinedError("evaluate: empty dataset");
  std::vector<Tensor<T>> preds;
  std::vector<Tensor<T>> truths;
  for (const auto& s : dataset) {
    preds.push_back(net.forward(s.image).main);
    truths.push_back(s.mask);
  }
  return evaluate_predictions(preds, truths, opts);
}

#define CDNET_INSTANTIATE_TRAINER(T)                                                              \
  template void adam_step(ParamStore<T>&, AdamState<T>&, double, const TrainConfig&);             \
  template Tensor<T> stack_batch(const std::vector<const Tensor<T>*>&);                           \
  template TotalLoss<T> compute_gradients(Network<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                          const LossConfig&);                                     \
  template TrainHistory train(Network<T>&, const std::vector<Sample<T>>&, const TrainConfig&,     \
                              const LossConfig&, const EpochCallback&);                           \
  template AggregateReport evaluate_predictions(const std::vector<Tensor<T>>&,                    \
                                                const std::vector<Tensor<T>>&, const EvalOptions&); \
  template AggregateReport evaluate(const Network<T>&, const std::vector<Sample<T>>&,             \
                                    const EvalOptions&);

CDNET_INSTANTIATE_TRAINER(float)
CDNET_INSTANTIATE_TRAINER(double)

#undef CDNET_INSTANTIATE_TRAINER

}  // namespace cdnet
