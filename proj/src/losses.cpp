#include "cdnet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cdnet {

namespace {

template <typename T>
void require_same_length(std::span<const T> pred, std::span<const T> truth, const char* what) {
  if (pred.size() != truth.size()) {
    throw ShapeError(std::string(what) + ": prediction has " + std::to_string(pred.size()) +
                     " elements, truth has " + std::to_string(truth.size()));
  }
}

struct Overlap {
  double tp = 0, fn = 0, fp = 0, sum_pred = 0, sum_truth = 0;
};

template <typename T>
Overlap soft_overlap(std::span<const T> pred, std::span<const T> truth) {
  Overlap o;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    const double y = truth[i];
    o.tp += p * y;
    o.fn += y * (1.0 - p);
    o.fp += (1.0 - y) * p;
    o.sum_pred += p;
    o.sum_truth += y;
  }
  return o;
}

template <typename T>
std::vector<T> complement(std::span<const T> v) {
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = T(1) - v[i];
  return out;
}

template <typename T>
LossResult<T> foreground_objective(std::span<const T> pred, std::span<const T> truth,
                                   const LossConfig& cfg) {
  auto accumulate = [](LossResult<T>& acc, const LossResult<T>& term) {
    acc.value += term.value;
    for (std::size_t i = 0; i < acc.grad.size(); ++i) acc.grad[i] += term.grad[i];
  };
  LossResult<T> r{0.0, std::vector<T>(pred.size(), T(0))};
  switch (cfg.kind) {
    case LossKind::kDiceFocalTversky:
      accumulate(r, dice_loss(pred, truth, cfg.epsilon));
      accumulate(r, focal_tversky_loss(pred, truth, cfg));
      break;
    case LossKind::kDice:
      accumulate(r, dice_loss(pred, truth, cfg.epsilon));
      break;
    case LossKind::kFocalTversky:
      accumulate(r, focal_tversky_loss(pred, truth, cfg));
      break;
    case LossKind::kFocalDice:
      accumulate(r, focal_loss(pred, truth, cfg));
      accumulate(r, dice_loss(pred, truth, cfg.epsilon));
      break;
  }
  return r;
}

}  // namespace

const char* loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::kDiceFocalTversky: return "dice_focal_tversky";
    case LossKind::kDice: return "dice";
    case LossKind::kFocalTversky: return "focal_tversky";
    case LossKind::kFocalDice: return "focal_dice";
  }
  return "?";
}

LossKind loss_kind_from_name(const std::string& s) {
  for (LossKind k : {LossKind::kDiceFocalTversky, LossKind::kDice, LossKind::kFocalTversky,
                     LossKind::kFocalDice}) {
    if (s == loss_kind_name(k)) return k;
  }
  throw ConfigError("unknown loss kind '" + s + "'");
}

void LossConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("LossConfig: alpha and beta must be >= 0");
  if (!(gamma > 0.0)) throw ConfigError("LossConfig: gamma must be > 0");
  if (!(epsilon > 0.0)) throw ConfigError("LossConfig: epsilon must be > 0");
  if (!(focal_gamma >= 0.0)) throw ConfigError("LossConfig: focal_gamma must be >= 0");
}

template <typename T>
LossResult<T> dice_loss(std::span<const T> pred, std::span<const T> truth, double epsilon) {
  require_same_length(pred, truth, "dice_loss");
  const Overlap o = soft_overlap(pred, truth);
  const double num = 2.0 * o.tp + epsilon;
  const double den = o.sum_pred + o.sum_truth + epsilon;
  LossResult<T> r{1.0 - num / den, std::vector<T>(pred.size())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    r.grad[i] = static_cast<T>(-(2.0 * truth[i] * den - num) / (den * den));
  }
  return r;
}

template <typename T>
LossResult<T> tversky_loss(std::span<const T> pred, std::span<const T> truth, const LossConfig& cfg) {
  require_same_length(pred, truth, "tversky_loss");
  const Overlap o = soft_overlap(pred, truth);
  const double num = o.tp + cfg.epsilon;
  const double den = o.tp + cfg.alpha * o.fn + cfg.beta * o.fp + cfg.epsilon;
  LossResult<T> r{1.0 - num / den, std::vector<T>(pred.size())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double y = truth[i];
    const double dden = y - cfg.alpha * y + cfg.beta * (1.0 - y);
    r.grad[i] = static_cast<T>(-(y * den - num * dden) / (den * den));
  }
  return r;
}

template <typename T>
LossResult<T> focal_tversky_loss(std::span<const T> pred, std::span<const T> truth,
                                 const LossConfig& cfg) {
  LossResult<T> tl = tversky_loss(pred, truth, cfg);
  const double exponent = 1.0 / cfg.gamma;
  const double base = std::max(tl.value, 0.0);
  LossResult<T> r{std::pow(base, exponent), std::vector<T>(pred.size(), T(0))};
  // At TL = 0 the prediction is already optimal; use the zero subgradient there.
  if (base > 0.0) {
    const double scale = exponent * std::pow(base, exponent - 1.0);
    for (std::size_t i = 0; i < pred.size(); ++i) r.grad[i] = static_cast<T>(scale * tl.grad[i]);
  }
  return r;
}

template <typename T>
LossResult<T> focal_loss(std::span<const T> pred, std::span<const T> truth, const LossConfig& cfg) {
  require_same_length(pred, truth, "focal_loss");
  constexpr double kClip = 1e-7;
  const double g = cfg.focal_gamma;
  const double n = static_cast<double>(std::max<std::size_t>(pred.size(), 1));
  LossResult<T> r{0.0, std::vector<T>(pred.size(), T(0))};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double raw = pred[i];
    const double p = std::clamp(raw, kClip, 1.0 - kClip);
    const bool clipped = p != raw;
    const double y = truth[i];
    // Positive term -(1-p)^g log p, negative term -p^g log(1-p).
    const double pos = -std::pow(1.0 - p, g) * std::log(p);
    const double neg = -std::pow(p, g) * std::log(1.0 - p);
    r.value += y * pos + (1.0 - y) * neg;
    if (!clipped) {
      const double dpos = (g > 0 ? g * std::pow(1.0 - p, g - 1.0) * std::log(p) : 0.0) -
                          std::pow(1.0 - p, g) / p;
      const double dneg = -(g > 0 ? g * std::pow(p, g - 1.0) * std::log(1.0 - p) : 0.0) +
                          std::pow(p, g) / (1.0 - p);
      r.grad[i] = static_cast<T>((y * dpos + (1.0 - y) * dneg) / n);
    }
  }
  r.value /= n;
  return r;
}

template <typename T>
LossResult<T> combined_loss(std::span<const T> pred, std::span<const T> truth, const LossConfig& cfg) {
  require_same_length(pred, truth, "combined_loss");
  LossResult<T> r = foreground_objective(pred, truth, cfg);
  if (cfg.include_background) {
    const std::vector<T> bp = complement(pred);
    const std::vector<T> bt = complement(truth);
    LossResult<T> bg = foreground_objective(std::span<const T>(bp), std::span<const T>(bt), cfg);
    r.value += bg.value;
    for (std::size_t i = 0; i < r.grad.size(); ++i) r.grad[i] -= bg.grad[i];
  }
  return r;
}

template <typename T>
LossResult<T> batch_loss(const Tensor<T>& pred, const Tensor<T>& truth, const LossConfig& cfg) {
  if (pred.shape() != truth.shape()) {
    throw ShapeError("loss: prediction " + pred.shape().str() + " vs truth " + truth.shape().str());
  }
  const std::size_t per = pred.c() * pred.h() * pred.w();
  LossResult<T> r{0.0, std::vector<T>(pred.size(), T(0))};
  const double inv_n = 1.0 / static_cast<double>(std::max<std::size_t>(pred.n(), 1));
  for (std::size_t n = 0; n < pred.n(); ++n) {
    std::span<const T> p(pred.data() + n * per, per);
    std::span<const T> y(truth.data() + n * per, per);
    LossResult<T> s = combined_loss(p, y, cfg);
    r.value += s.value * inv_n;
    for (std::size_t i = 0; i < per; ++i) r.grad[n * per + i] = static_cast<T>(s.grad[i] * inv_n);
  }
  return r;
}

template <typename T>
TotalLoss<T> total_loss(const ForwardOutputs<T>& outputs, const Tensor<T>& truth,
                        const LossConfig& cfg) {
  cfg.validate();
  TotalLoss<T> t;
  LossResult<T> main = batch_loss(outputs.main, truth, cfg);
  t.output = main.value;
  t.grad_main = Tensor<T>(outputs.main.shape(), std::move(main.grad));
  if (outputs.aux) {
    LossResult<T> aux = batch_loss(*outputs.aux, truth, cfg);
    t.supervision = aux.value;
    t.grad_aux = Tensor<T>(outputs.aux->shape(), std::move(aux.grad));
  } else if (!outputs.aux_branches.empty()) {
    const double w = 1.0 / static_cast<double>(outputs.aux_branches.size());
    for (const auto& branch : outputs.aux_branches) {
      LossResult<T> b = batch_loss(branch, truth, cfg);
      t.supervision += w * b.value;
      for (auto& g : b.grad) g = static_cast<T>(g * w);
      t.grad_aux_branches.emplace_back(branch.shape(), std::move(b.grad));
    }
  }
  t.total = t.output + t.supervision;
  return t;
}

#define CDNET_INSTANTIATE_LOSSES(T)                                                              \
  template LossResult<T> dice_loss(std::span<const T>, std::span<const T>, double);              \
  template LossResult<T> tversky_loss(std::span<const T>, std::span<const T>, const LossConfig&); \
  template LossResult<T> focal_tversky_loss(std::span<const T>, std::span<const T>,              \
                                            const LossConfig&);                                  \
  template LossResult<T> focal_loss(std::span<const T>, std::span<const T>, const LossConfig&);  \
  template LossResult<T> combined_loss(std::span<const T>, std::span<const T>,                   \
                                       const LossConfig&);                                       \
  template LossResult<T> batch_loss(const Tensor<T>&, const Tensor<T>&, const LossConfig&);      \
  template TotalLoss<T> total_loss(const ForwardOutputs<T>&, const Tensor<T>&, const LossConfig&);

CDNET_INSTANTIATE_LOSSES(float)
CDNET_INSTANTIATE_LOSSES(double)

#undef CDNET_INSTANTIATE_LOSSES

}  // namespace cdnet
