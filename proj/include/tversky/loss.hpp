#pragma once

// Tversky index on hard counts and its soft, differentiable form over softmax
// probability planes.
//
//   T = (sum p0 g0 + eps) / (sum p0 g0 + alpha sum p0 g1 + beta sum p1 g0 + eps)
//   loss = 1 - T
//
// alpha weighs false positives, beta false negatives. (0.5, 0.5) is Dice,
// (1, 1) is Tanimoto/Jaccard, and alpha + beta = 1 gives the F-beta family.

#include <cmath>
#include <exception>
#include <string>
#include <string_view>

#include "tversky/metrics.hpp"
#include "tversky/tensor.hpp"

namespace tversky::loss {

struct TverskyParams {
  double alpha = 0.5;
  double beta = 0.5;
  double epsilon = 1e-6;

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(alpha + beta > 0.0)) {
      throw ConfigError("tversky: need alpha, beta >= 0 and alpha + beta > 0, got alpha=" +
                        std::to_string(alpha) + " beta=" + std::to_string(beta));
    }
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
      throw ConfigError("tversky: epsilon must be positive, got " + std::to_string(epsilon));
    }
  }
};

/// One-hot ground truth: g0 = 1 on lesion voxels, g1 = 1 - g0.
struct LabelPlanes {
  Tensor g0;
  Tensor g1;

  static LabelPlanes from_binary(const Tensor& labels) {
    LabelPlanes planes{Tensor(labels.shape()), Tensor(labels.shape())};
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != 0.0 && labels[i] != 1.0) {
        throw ConfigError("labels must be {0,1}-valued, found " + std::to_string(labels[i]));
      }
      planes.g0[i] = labels[i];
      planes.g1[i] = 1.0 - labels[i];
    }
    return planes;
  }
};

/// Softmax output split into the lesion (p0) and background (p1) planes.
struct PredictionPlanes {
  Tensor p0;
  Tensor p1;

  /// From a (..., 2) probability tensor; channel 0 is lesion.
  static PredictionPlanes from_channels(const Tensor& probs) {
    const std::size_t r = probs.rank();
    if (r < 2 || probs.extent(r - 1) != 2) {
      throw ConfigError("prediction planes need a trailing channel axis of 2, got " +
                        shape_str(probs.shape()));
    }
    Shape plane(probs.shape().begin(), probs.shape().end() - 1);
    PredictionPlanes planes{Tensor(plane), Tensor(plane)};
    for (std::size_t i = 0; i < planes.p0.size(); ++i) {
      planes.p0[i] = probs[2 * i];
      planes.p1[i] = probs[2 * i + 1];
    }
    return planes;
  }

  /// Builds p1 = 1 - p0.
  static PredictionPlanes from_lesion(const Tensor& p0) {
    PredictionPlanes planes{p0, Tensor(p0.shape())};
    for (std::size_t i = 0; i < p0.size(); ++i) planes.p1[i] = 1.0 - p0[i];
    return planes;
  }
};

/// Gradient planes dloss/dp0 and dloss/dp1, treating p0 and p1 as
/// independent inputs.
struct GradPlanes {
  Tensor d_p0;
  Tensor d_p1;

  /// Interleaves into a (..., 2) tensor matching the softmax output layout.
  Tensor to_channels() const {
    Shape shape = d_p0.shape();
    shape.push_back(2);
    Tensor out(shape);
    for (std::size_t i = 0; i < d_p0.size(); ++i) {
      out[2 * i] = d_p0[i];
      out[2 * i + 1] = d_p1[i];
    }
    return out;
  }
};

/// Soft counts entering the index.
struct SoftCounts {
  double true_pos = 0.0;   // sum p0 g0
  double false_pos = 0.0;  // sum p0 g1
  double false_neg = 0.0;  // sum p1 g0
};

struct LossValue {
  double loss = 0.0;
  double index = 0.0;
  SoftCounts counts;
};

/// Set-based index (TP + eps) / (TP + alpha FP + beta FN + eps).
inline double tversky_index_sets(const metrics::ConfusionCounts& c, const TverskyParams& params) {
  params.validate();
  const double tp = static_cast<double>(c.tp);
  return (tp + params.epsilon) / (tp + params.alpha * static_cast<double>(c.fp) +
                                  params.beta * static_cast<double>(c.fn) + params.epsilon);
}

namespace detail {

inline void check_inputs(const PredictionPlanes& pred, const LabelPlanes& labels) {
  require_same_shape(pred.p0, pred.p1, "tversky: p0 vs p1");
  require_same_shape(labels.g0, labels.g1, "tversky: g0 vs g1");
  require_same_shape(pred.p0, labels.g0, "tversky: prediction vs labels");
  if (!pred.p0.all_finite() || !pred.p1.all_finite()) {
    throw NumericError("tversky: prediction planes contain NaN or Inf");
  }
  if (!labels.g0.all_finite() || !labels.g1.all_finite()) {
    throw NumericError("tversky: label planes contain NaN or Inf");
  }
}

inline SoftCounts soft_counts(const PredictionPlanes& pred, const LabelPlanes& labels) {
  SoftCounts s;
  for (std::size_t i = 0; i < pred.p0.size(); ++i) {
    s.true_pos += pred.p0[i] * labels.g0[i];
    s.false_pos += pred.p0[i] * labels.g1[i];
    s.false_neg += pred.p1[i] * labels.g0[i];
  }
  return s;
}

}  // namespace detail

inline LossValue tversky_loss_forward(const PredictionPlanes& pred, const LabelPlanes& labels,
                                      const TverskyParams& params) {
  params.validate();
  detail::check_inputs(pred, labels);
  LossValue v;
  v.counts = detail::soft_counts(pred, labels);
  const double num = v.counts.true_pos + params.epsilon;
  const double den = v.counts.true_pos + params.alpha * v.counts.false_pos +
                     params.beta * v.counts.false_neg + params.epsilon;
  v.index = num / den;
  v.loss = 1.0 - v.index;
  return v;
}

/// Exact derivative of tversky_loss_forward's loss (quotient rule, eps
/// included). With N, Dn the numerator and denominator of T:
///   dT/dp0_j = (g0_j Dn - N (g0_j + alpha g1_j)) / Dn^2
///   dT/dp1_j = -beta g0_j N / Dn^2
inline GradPlanes tversky_loss_backward(const PredictionPlanes& pred, const LabelPlanes& labels,
                                        const TverskyParams& params) {
  params.validate();
  detail::check_inputs(pred, labels);
  const SoftCounts s = detail::soft_counts(pred, labels);
  const double num = s.true_pos + params.epsilon;
  const double den = s.true_pos + params.alpha * s.false_pos + params.beta * s.false_neg + params.epsilon;
  const double den2 = den * den;
  GradPlanes g{Tensor(pred.p0.shape()), Tensor(pred.p0.shape())};
  for (std::size_t j = 0; j < pred.p0.size(); ++j) {
    const double g0 = labels.g0[j], g1 = labels.g1[j];
    g.d_p0[j] = -(g0 * den - num * (g0 + params.alpha * g1)) / den2;
    g.d_p1[j] = params.beta * g0 * num / den2;
  }
  return g;
}

enum class SpecialCase { dice, tanimoto, f_beta };

/// Dice -> (0.5, 0.5); Tanimoto -> (1, 1); F_b -> alpha + beta = 1 with
/// beta / alpha = b^2.
inline TverskyParams special_case(SpecialCase which, double b = 1.0) {
  switch (which) {
    case SpecialCase::dice: return {0.5, 0.5};
    case SpecialCase::tanimoto: return {1.0, 1.0};
    case SpecialCase::f_beta:
      if (!(b > 0.0) || !std::isfinite(b)) {
        throw ConfigError("f_beta: b must be positive, got " + std::to_string(b));
      }
      return {1.0 / (1.0 + b * b), b * b / (1.0 + b * b)};
  }
  throw ConfigError("unknown special case");
}

/// Parses "dice", "tanimoto", "f_beta(<b>)" or "f<b>" (e.g. "f2").
inline TverskyParams named_special_case(std::string_view name) {
  if (name == "dice") return special_case(SpecialCase::dice);
  if (name == "tanimoto" || name == "jaccard") return special_case(SpecialCase::tanimoto);
  std::string_view arg;
  if (name.starts_with("f_beta(") && name.ends_with(")")) {
    arg = name.substr(7, name.size() - 8);
  } else if (name.size() > 1 && name.front() == 'f') {
    arg = name.substr(1);
  } else {
    throw ConfigError("unknown Tversky special case '" + std::string(name) + "'");
  }
  std::size_t used = 0;
  double b = 0.0;
  try {
    b = std::stod(std::string(arg), &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != arg.size()) {
    throw ConfigError("unknown Tversky special case '" + std::string(name) + "'");
  }
  return special_case(SpecialCase::f_beta, b);
}

}  // namespace tversky::loss
