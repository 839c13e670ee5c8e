#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cdnet {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

struct MetricsReport {
  double dsc = 0.0;
  double iou = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double spe = 0.0;
  std::optional<double> roc_auc;
  std::optional<double> pr_auc;
};

inline constexpr double kDefaultThreshold = 0.5;

/// A pixel is predicted positive iff pred >= threshold; truth is positive iff nonzero.
template <typename P, typename Y>
ConfusionCounts confusion_counts(std::span<const P> pred, std::span<const Y> truth,
                                 double threshold = kDefaultThreshold);

/// Zero denominators resolve to 1 when the relevant truth set is empty and the
/// prediction agrees with it, else 0.
MetricsReport segmentation_metrics(const ConfusionCounts& counts);

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};

struct Curve {
  std::vector<CurvePoint> points;
  double area = 0.0;
};

struct ScoredLabel {
  double score = 0.0;
  bool positive = false;
};

/// (FPR, TPR) at every distinct threshold, tied scores grouped; trapezoidal area.
/// Throws UndefinedError unless both classes are present.
Curve roc_curve(std::span<const ScoredLabel> samples);

/// (recall, precision) starting at (0, 1), tied scores grouped; trapezoidal area over recall.
/// Throws UndefinedError when no positive label is present.
Curve pr_curve(std::span<const ScoredLabel> samples);

inline double roc_auc(std::span<const ScoredLabel> s) { return roc_curve(s).area; }
inline double pr_auc(std::span<const ScoredLabel> s) { return pr_curve(s).area; }

struct AggregateReport {
  MetricsReport mean;
  MetricsReport stddev;  // population std over slices (zero for micro)
  std::vector<MetricsReport> per_slice;
  ConfusionCounts pooled;
  bool micro = false;
};

/// Macro (mean of per-slice metrics, default) or micro (metrics of pooled counts).
AggregateReport aggregate(std::span<const ConfusionCounts> per_slice, bool micro = false);

/// Human-readable lines followed by a `key=value` block.
std::string format_report(const AggregateReport& report);

}  // namespace cdnet
