#pragma once

// Confusion-count metrics and precision-recall analysis for binary
// segmentation. Label 1 is lesion (positive), 0 is background.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tversky/tensor.hpp"

namespace tversky::metrics {

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

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// 1 where p0 >= threshold, else 0.
inline Tensor binarize(const Tensor& p0, double threshold = 0.5) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ConfigError("binarize: threshold " + std::to_string(threshold) + " outside [0, 1]");
  }
  Tensor out(p0.shape());
  for (std::size_t i = 0; i < p0.size(); ++i) out[i] = p0[i] >= threshold ? 1.0 : 0.0;
  return out;
}

/// Voxelwise counts; any nonzero value counts as positive.
inline ConfusionCounts confusion(const Tensor& predicted, const Tensor& truth) {
  require_same_shape(predicted, truth, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] != 0.0;
    const bool g = truth[i] != 0.0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

namespace detail {

// Ratio with the zero-denominator convention: nothing to get wrong scores 1.
inline double ratio_or_one(double num, double den) { return den == 0.0 ? 1.0 : num / den; }

}  // namespace detail

// Zero denominators score 1: an empty prediction against empty truth is a
// perfect result, and precision without predictions has no false alarms.
inline double dsc(const ConfusionCounts& c) {
  const double tp = static_cast<double>(c.tp);
  return detail::ratio_or_one(2.0 * tp, 2.0 * tp + static_cast<double>(c.fp + c.fn));
}

inline double f2(const ConfusionCounts& c) {
  const double tp = static_cast<double>(c.tp);
  return detail::ratio_or_one(5.0 * tp, 5.0 * tp + 4.0 * static_cast<double>(c.fn) +
                                             static_cast<double>(c.fp));
}

inline double sensitivity(const ConfusionCounts& c) {
  return detail::ratio_or_one(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
}

inline double specificity(const ConfusionCounts& c) {
  return detail::ratio_or_one(static_cast<double>(c.tn), static_cast<double>(c.tn + c.fp));
}

inline double precision(const ConfusionCounts& c) {
  return detail::ratio_or_one(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
}

inline double jaccard(const ConfusionCounts& c) {
  const double tp = static_cast<double>(c.tp);
  return detail::ratio_or_one(tp, tp + static_cast<double>(c.fp + c.fn));
}

struct PRPoint {
  double threshold;
  double precision;
  double recall;
};

enum class AreaRule { step, trapezoid };

/// Precision-recall curve, one point per distinct score, thresholds strictly
/// decreasing.
struct PRCurve {
  std::vector<PRPoint> points;
  double apr = 0.0;
  std::uint64_t positives = 0;
  std::uint64_t total = 0;

  /// Operating point for the decision rule `score >= threshold`: the last
  /// point whose threshold is still >= t. Thresholds above every score give
  /// an empty prediction.
  PRPoint at_threshold(double t) const {
    PRPoint best{t, 1.0, 0.0};
    for (const auto& p : points) {
      if (p.threshold >= t) best = p;
      else break;
    }
    return best;
  }
};

/// Area under a PR curve. `step` is average precision sum_k (R_k - R_{k-1}) P_k
/// with R_0 = 0; `trapezoid` interpolates linearly between points, starting
/// from (R = 0, P = first precision).
inline double area_under(const std::vector<PRPoint>& points, AreaRule rule = AreaRule::step) {
  double area = 0.0, prev_r = 0.0;
  double prev_p = points.empty() ? 1.0 : points.front().precision;
  for (const auto& p : points) {
    const double dr = p.recall - prev_r;
    area += rule == AreaRule::step ? dr * p.precision : dr * 0.5 * (p.precision + prev_p);
    prev_r = p.recall;
    prev_p = p.precision;
  }
  return std::clamp(area, 0.0, 1.0);
}

/// Visits scores in decreasing order (ties by voxel index) and emits one
/// point at each distinct score.
inline PRCurve pr_curve(const Tensor& scores, const Tensor& labels, AreaRule rule = AreaRule::step) {
  require_same_shape(scores, labels, "pr_curve");
  const std::size_t n = scores.size();
  std::uint64_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) positives += labels[i] != 0.0;
  if (positives == 0) throw ConfigError("pr_curve: no positive labels, recall is undefined");
  if (!scores.all_finite()) throw NumericError("pr_curve: non-finite score");

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });

  PRCurve curve;
  curve.positives = positives;
  curve.total = n;
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint32_t i = order[k];
    if (labels[i] != 0.0) ++tp;
    else ++fp;
    if (k + 1 == n || scores[order[k + 1]] != scores[i]) {
      curve.points.push_back({scores[i], static_cast<double>(tp) / static_cast<double>(tp + fp),
                              static_cast<double>(tp) / static_cast<double>(positives)});
    }
  }
  curve.apr = area_under(curve.points, rule);
  return curve;
}

/// Writes `threshold,precision,recall` with six decimals per value.
inline void write_pr_csv(std::ostream& os, const PRCurve& curve) {
  os << "threshold,precision,recall\n" << std::fixed << std::setprecision(6);
  for (const auto& p : curve.points) os << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
}

inline void write_pr_csv(const std::string& path, const PRCurve& curve) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_pr_csv(os, curve);
  if (!os) throw IoError("failed writing " + path);
}

inline std::vector<PRPoint> read_pr_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  std::getline(is, line);
  if (line != "threshold,precision,recall") throw IoError(path + ": unexpected PR header '" + line + "'");
  std::vector<PRPoint> points;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    PRPoint p{};
    char c1 = 0, c2 = 0;
    if (!(row >> p.threshold >> c1 >> p.precision >> c2 >> p.recall) || c1 != ',' || c2 != ',') {
      throw IoError(path + ": malformed PR row '" + line + "'");
    }
    points.push_back(p);
  }
  return points;
}

}  // namespace tversky::metrics
