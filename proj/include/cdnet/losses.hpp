#pragma once

// Region-based segmentation losses. Every loss returns its value together with
// the gradient with respect to the prediction map; values are computed per
// sample and averaged over the batch.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdnet/tensor.hpp"

namespace cdnet {

enum class LossKind {
  kDiceFocalTversky,  // DL + FTL (default)
  kDice,
  kFocalTversky,
  kFocalDice,         // pixelwise focal cross-entropy + DL
};

const char* loss_kind_name(LossKind k);
LossKind loss_kind_from_name(const std::string& s);

struct LossConfig {
  double alpha = 0.7;    // false-negative weight
  double beta = 0.3;     // false-positive weight
  double gamma = 4.0 / 3.0;  // FTL = TL^(1/gamma)
  double epsilon = 1e-6;
  double focal_gamma = 2.0;
  bool include_background = false;  // also sum the l = 0 class term
  LossKind kind = LossKind::kDiceFocalTversky;

  void validate() const;
};

template <typename T>
struct LossResult {
  double value = 0.0;
  std::vector<T> grad;  // d value / d pred, same length as pred
};

template <typename T>
LossResult<T> dice_loss(std::span<const T> pred, std::span<const T> truth, double epsilon);

template <typename T>
LossResult<T> tversky_loss(std::span<const T> pred, std::span<const T> truth, const LossConfig& cfg);

template <typename T>
LossResult<T> focal_tversky_loss(std::span<const T> pred, std::span<const T> truth,
                                 const LossConfig& cfg);

/// Mean pixelwise focal cross-entropy with focusing parameter cfg.focal_gamma.
template <typename T>
LossResult<T> focal_loss(std::span<const T> pred, std::span<const T> truth, const LossConfig& cfg);

/// The training objective selected by cfg.kind (DL + FTL by default), over one map.
template <typename T>
LossResult<T> combined_loss(std::span<const T> pred, std::span<const T> truth, const LossConfig& cfg);

/// combined_loss per sample of an N x 1 x H x W batch, averaged over N.
template <typename T>
LossResult<T> batch_loss(const Tensor<T>& pred, const Tensor<T>& truth, const LossConfig& cfg);

template <typename T>
struct ForwardOutputs {
  Tensor<T> main;
  std::optional<Tensor<T>> aux;
  /// Populated instead of `aux` when each deep-supervision branch has its own head.
  std::vector<Tensor<T>> aux_branches;
};

template <typename T>
struct TotalLoss {
  double total = 0.0;
  double output = 0.0;
  double supervision = 0.0;
  Tensor<T> grad_main;
  std::optional<Tensor<T>> grad_aux;
  std::vector<Tensor<T>> grad_aux_branches;
};

/// total = L(main) + L(aux); per-branch supervision is averaged over branches.
template <typename T>
TotalLoss<T> total_loss(const ForwardOutputs<T>& outputs, const Tensor<T>& truth,
                        const LossConfig& cfg);

}  // namespace cdnet
