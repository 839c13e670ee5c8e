#include "cdnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cdnet/errors.hpp"

namespace cdnet {

template <typename P, typename Y>
ConfusionCounts confusion_counts(std::span<const P> pred, std::span<const Y> truth, double threshold) {
  if (pred.size() != truth.size()) {
    throw ShapeError("confusion_counts: prediction has " + std::to_string(pred.size()) +
                     " pixels, truth has " + std::to_string(truth.size()));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = static_cast<double>(pred[i]) >= threshold;
    const bool y = truth[i] != Y(0);
    if (p && y) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

template ConfusionCounts confusion_counts(std::span<const float>, std::span<const float>, double);
template ConfusionCounts confusion_counts(std::span<const double>, std::span<const double>, double);
template ConfusionCounts confusion_counts(std::span<const float>, std::span<const std::uint8_t>,
                                          double);
template ConfusionCounts confusion_counts(std::span<const double>, std::span<const std::uint8_t>,
                                          double);
template ConfusionCounts confusion_counts(std::span<const std::uint8_t>,
                                          std::span<const std::uint8_t>, double);

namespace {

double ratio_or(std::uint64_t num, std::uint64_t den, bool degenerate_agrees) {
  if (den == 0) return degenerate_agrees ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsReport segmentation_metrics(const ConfusionCounts& c) {
  MetricsReport r;
  // DSC/IoU: denominator zero only when truth and prediction are both empty.
  r.dsc = ratio_or(2 * c.tp, 2 * c.tp + c.fp + c.fn, true);
  r.iou = ratio_or(c.tp, c.tp + c.fp + c.fn, true);
  r.precision = ratio_or(c.tp, c.tp + c.fp, c.fn == 0);
  r.recall = ratio_or(c.tp, c.tp + c.fn, c.fp == 0);
  r.spe = ratio_or(c.tn, c.tn + c.fp, c.fn == 0);
  return r;
}

namespace {

struct Sweep {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> cumulative;  // (tp, fp) per threshold group
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;
};

Sweep sweep(std::span<const ScoredLabel> samples) {
  std::vector<ScoredLabel> sorted(samples.begin(), samples.end());
  for (const auto& s : sorted) {
    if (!std::isfinite(s.score)) throw NumericError("curve: non-finite score");
  }
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });
  Sweep out;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].positive) ++tp;
    else ++fp;
    if (i + 1 == sorted.size() || sorted[i + 1].score != sorted[i].score) {
      out.cumulative.emplace_back(tp, fp);
    }
  }
  out.positives = tp;
  out.negatives = fp;
  return out;
}

double trapezoid(const std::vector<CurvePoint>& pts) {
  double a = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    a += (pts[i].x - pts[i - 1].x) * (pts[i].y + pts[i - 1].y) * 0.5;
  }
  return a;
}

}  // namespace

Curve roc_curve(std::span<const ScoredLabel> samples) {
  const Sweep s = sweep(samples);
  if (s.positives == 0 || s.negatives == 0) {
    throw UndefinedError("roc_auc: undefined without both positive and negative labels");
  }
  Curve c;
  c.points.push_back({0.0, 0.0});
  for (const auto& [tp, fp] : s.cumulative) {
    c.points.push_back({static_cast<double>(fp) / static_cast<double>(s.negatives),
                        static_cast<double>(tp) / static_cast<double>(s.positives)});
  }
  c.area = trapezoid(c.points);
  return c;
}

Curve pr_curve(std::span<const ScoredLabel> samples) {
  const Sweep s = sweep(samples);
  if (s.positives == 0) throw UndefinedError("pr_auc: undefined without positive labels");
  Curve c;
  c.points.push_back({0.0, 1.0});
  for (const auto& [tp, fp] : s.cumulative) {
    c.points.push_back({static_cast<double>(tp) / static_cast<double>(s.positives),
                        static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  c.area = trapezoid(c.points);
  return c;
}

AggregateReport aggregate(std::span<const ConfusionCounts> per_slice, bool micro) {
  if (per_slice.empty()) throw UndefinedError("aggregate: no slices");
  AggregateReport r;
  r.micro = micro;
  for (const auto& c : per_slice) {
    r.pooled += c;
    r.per_slice.push_back(segmentation_metrics(c));
  }
  if (micro) {
    r.mean = segmentation_metrics(r.pooled);
    return r;
  }
  const double n = static_cast<double>(per_slice.size());
  auto field_stats = [&](double MetricsReport::*f, double& mean, double& sd) {
    double s = 0.0;
    for (const auto& m : r.per_slice) s += m.*f;
    mean = s / n;
    double v = 0.0;
    for (const auto& m : r.per_slice) v += (m.*f - mean) * (m.*f - mean);
    sd = std::sqrt(v / n);
  };
  for (auto f : {&MetricsReport::dsc, &MetricsReport::iou, &MetricsReport::precision,
                 &MetricsReport::recall, &MetricsReport::spe}) {
    field_stats(f, r.mean.*f, r.stddev.*f);
  }
  return r;
}

std::string format_report(const AggregateReport& r) {
  std::ostringstream os;
  char buf[128];
  auto line = [&](const char* name, double mean, double sd) {
    std::snprintf(buf, sizeof buf, "%-10s %.4f +/- %.4f\n", name, mean, sd);
    os << buf;
  };
  os << "slices     " << r.per_slice.size() << (r.micro ? " (micro)" : " (macro)") << "\n";
  line("DSC", r.mean.dsc, r.stddev.dsc);
  line("IoU", r.mean.iou, r.stddev.iou);
  line("Precision", r.mean.precision, r.stddev.precision);
  line("Recall", r.mean.recall, r.stddev.recall);
  line("SPE", r.mean.spe, r.stddev.spe);
  if (r.mean.roc_auc) {
    std::snprintf(buf, sizeof buf, "ROC-AUC    %.4f\n", *r.mean.roc_auc);
    os << buf;
  }
  if (r.mean.pr_auc) {
    std::snprintf(buf, sizeof buf, "PR-AUC     %.4f\n", *r.mean.pr_auc);
    os << buf;
  }
  os << "---\n";
  auto kv = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%s=%.17g\n", key, v);
    os << buf;
  };
  os << "slices=" << r.per_slice.size() << "\n";
  os << "aggregation=" << (r.micro ? "micro" : "macro") << "\n";
  kv("dsc", r.mean.dsc);
  kv("dsc_std", r.stddev.dsc);
  kv("iou", r.mean.iou);
  kv("iou_std", r.stddev.iou);
  kv("precision", r.mean.precision);
  kv("precision_std", r.stddev.precision);
  kv("recall", r.mean.recall);
  kv("recall_std", r.stddev.recall);
  kv("spe", r.mean.spe);
  kv("spe_std", r.stddev.spe);
  if (r.mean.roc_auc) kv("roc_auc", *r.mean.roc_auc);
  if (r.mean.pr_auc) kv("pr_auc", *r.mean.pr_auc);
  os << "tp=" << r.pooled.tp << "\nfp=" << r.pooled.fp << "\nfn=" << r.pooled.fn
     << "\ntn=" << r.pooled.tn << "\n";
  return os.str();
}

}  // namespace cdnet
