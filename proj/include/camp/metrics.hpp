#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "camp/errors.hpp"

namespace camp {

struct ConfusionMatrix {
  long long tp = 0, fp = 0, tn = 0, fn = 0;
  long long total() const { return tp + fp + tn + fn; }
};

/// Thresholds scores into a confusion matrix; positive iff score >= threshold.
inline ConfusionMatrix confusion(const std::vector<double>& scores,
                                 const std::vector<int>& labels, double threshold = 0.5) {
  if (scores.size() != labels.size())
    throw data_error("confusion: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i] == 1)
      pred ? ++cm.tp : ++cm.fn;
    else
      pred ? ++cm.fp : ++cm.tn;
  }
  return cm;
}

// Zero-denominator metrics yield an empty optional rather than 0 or NaN.

inline std::optional<double> accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) return std::nullopt;
  return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

inline std::optional<double> sensitivity(const ConfusionMatrix& cm) {
  if (cm.tp + cm.fn == 0) return std::nullopt;
  return static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
}

inline std::optional<double> specificity(const ConfusionMatrix& cm) {
  if (cm.tn + cm.fp == 0) return std::nullopt;
  return static_cast<double>(cm.tn) / static_cast<double>(cm.tn + cm.fp);
}

inline std::optional<double> precision(const ConfusionMatrix& cm) {
  if (cm.tp + cm.fp == 0) return std::nullopt;
  return static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
}

/// Harmonic mean of precision and sensitivity; undefined when either is
/// undefined or both are zero.
inline std::optional<double> f1_score(const ConfusionMatrix& cm) {
  const auto p = precision(cm);
  const auto s = sensitivity(cm);
  if (!p || !s || *p + *s == 0.0) return std::nullopt;
  return 2.0 * *p * *s / (*p + *s);
}

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  std::optional<double> auc;
};

/// ROC sweep over all distinct score thresholds with trapezoidal AUC; tied
/// scores are grouped, so the area equals the Mann-Whitney statistic
/// (concordant pairs plus half of the ties, normalized).
inline RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw data_error("roc_auc: score/label count mismatch");
  long long pos = 0, neg = 0;
  for (int l : labels) l == 1 ? ++pos : ++neg;
  RocCurve curve;
  if (pos == 0 || neg == 0) return curve;  // single-class: undefined

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  long long cp = 0, cn = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      labels[order[i]] == 1 ? ++cp : ++cn;
      ++i;
    }
    curve.points.push_back({s, static_cast<double>(cn) / static_cast<double>(neg),
                            static_cast<double>(cp) / static_cast<double>(pos)});
  }
  double area = 0.0;
  for (std::size_t j = 1; j < curve.points.size(); ++j)
    area += (curve.points[j].fpr - curve.points[j - 1].fpr) *
            (curve.points[j].tpr + curve.points[j - 1].tpr) * 0.5;
  curve.auc = area;
  return curve;
}

struct MetricsReport {
  std::optional<double> accuracy, sensitivity, specificity, precision, f1, auc;
};

inline MetricsReport compute_metrics(const std::vector<double>& scores,
                                     const std::vector<int>& labels, double threshold = 0.5) {
  const ConfusionMatrix cm = confusion(scores, labels, threshold);
  MetricsReport r;
  r.accuracy = accuracy(cm);
  r.sensitivity = sensitivity(cm);
  r.specificity = specificity(cm);
  r.precision = precision(cm);
  r.f1 = f1_score(cm);
  r.auc = roc_auc(scores, labels).auc;
  return r;
}

enum class Aggregate { mean, max };

/// Collapses per-slice probabilities to one score per patient.
inline std::map<std::string, double> aggregate_patient(
    const std::map<std::string, std::vector<double>>& slice_scores,
    Aggregate rule = Aggregate::mean) {
  std::map<std::string, double> out;
  for (const auto& [patient, scores] : slice_scores) {
    if (scores.empty()) throw data_error("aggregate_patient: no scores for patient " + patient);
    if (rule == Aggregate::mean) {
      double s = 0.0;
      for (double v : scores) s += v;
      out[patient] = s / static_cast<double>(scores.size());
    } else {
      out[patient] = *std::max_element(scores.begin(), scores.end());
    }
  }
  return out;
}

}  // namespace camp
