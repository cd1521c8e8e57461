#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "seqseg/core/errors.hpp"
#include "seqseg/core/tensor.hpp"
#include "seqseg/core/types.hpp"
#include "seqseg/objective/hungarian.hpp"

namespace seqseg::objective {

inline constexpr double kEpsilon = 1e-7;

/// Which loss terms currently contribute to the total and its gradient.
struct ActiveTerms {
  bool mask = true;
  bool box = true;
  bool cls = true;
  bool stop = true;

  bool operator==(const ActiveTerms&) const = default;
};

struct LossWeights {
  double alpha = 1.0;   // box
  double lambda = 1.0;  // class
  double gamma = 1.0;   // stop
  ActiveTerms active;
};

struct LossBreakdown {
  double l_m = 0.0;
  double l_b = 0.0;
  double l_c = 0.0;
  double l_s = 0.0;
  double total = 0.0;
  AssignmentMatrix assignment;
};

/// d(total)/d(prediction) for every emitted step.
template <typename T>
struct PredictionGradients {
  std::vector<Tensor<T>> mask;
  std::vector<std::array<T, 4>> box;
  std::vector<std::vector<T>> classes;
  std::vector<T> stop;

  void reset(const PredictionSequence<T>& preds) {
    const std::size_t n = preds.size();
    mask.assign(n, {});
    box.assign(n, {});
    classes.assign(n, {});
    stop.assign(n, T(0));
    for (std::size_t t = 0; t < n; ++t) {
      const auto& m = preds[t].mask;
      mask[t] = Tensor<T>(m.channels(), m.height(), m.width());
      classes[t].assign(preds[t].class_probs.size(), T(0));
    }
  }
};

namespace detail {

struct OverlapSums {
  double inter = 0.0;
  double pred = 0.0;
  double gt = 0.0;
  double uni() const { return pred + gt - inter; }
};

template <typename T>
OverlapSums overlap_sums(const Tensor<T>& pred, const BinaryMask& gt) {
  if (pred.height() != gt.height || pred.width() != gt.width) {
    throw ShapeError("soft_iou_loss: prediction " + shape_string(pred) + " vs mask " +
                     shape_string(1, gt.height, gt.width));
  }
  OverlapSums s;
  const T* p = pred.data();
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const double v = static_cast<double>(p[i]);
    s.pred += v;
    if (gt.data[i]) {
      s.inter += v;
      s.gt += 1.0;
    }
  }
  return s;
}

}  // namespace detail

/// 1 - <p,y> / (|p|_1 + |y|_1 - <p,y>); 0 when the union is below the epsilon guard.
template <typename T>
double soft_iou_loss(const Tensor<T>& pred, const BinaryMask& gt) {
  const auto s = detail::overlap_sums(pred, gt);
  const double u = s.uni();
  if (u < kEpsilon) return 0.0;
  return 1.0 - s.inter / u;
}

/// Adds `scale * d sIoU / d pred` into `grad`.
template <typename T>
void soft_iou_gradient(const Tensor<T>& pred, const BinaryMask& gt, double scale, Tensor<T>& grad) {
  const auto s = detail::overlap_sums(pred, gt);
  const double u = s.uni();
  if (u < kEpsilon) return;
  const double u2 = u * u;
  // dI/dp = y, dU/dp = 1 - y
  const T on = static_cast<T>(-scale / u);
  const T off = static_cast<T>(scale * s.inter / u2);
  T* g = grad.data();
  for (std::size_t i = 0; i < gt.data.size(); ++i) g[i] += gt.data[i] ? on : off;
}

template <typename T>
CostMatrix cost_matrix(const PredictionSequence<T>& preds, const std::vector<GroundTruthInstance>& gts) {
  CostMatrix cost(static_cast<int>(preds.size()), static_cast<int>(gts.size()));
  for (int t = 0; t < cost.rows; ++t) {
    for (int k = 0; k < cost.cols; ++k) cost(t, k) = soft_iou_loss(preds[t].mask, gts[k].mask);
  }
  return cost;
}

inline void check_assignment(const AssignmentMatrix& delta, std::size_t rows, std::size_t cols) {
  if (delta.rows() != static_cast<int>(rows) || delta.cols() != static_cast<int>(cols)) {
    throw ShapeError("assignment is " + std::to_string(delta.rows()) + "x" + std::to_string(delta.cols()) +
                     ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

/// Sum of matched sIoU. Unmatched predictions contribute neither loss nor gradient.
template <typename T>
double mask_loss(const PredictionSequence<T>& preds, const std::vector<GroundTruthInstance>& gts,
                 const AssignmentMatrix& delta, PredictionGradients<T>* grads = nullptr, double scale = 1.0) {
  check_assignment(delta, preds.size(), gts.size());
  double loss = 0.0;
  for (int t = 0; t < delta.rows(); ++t) {
    const int k = delta.col_of(t);
    if (k < 0) continue;
    loss += soft_iou_loss(preds[t].mask, gts[k].mask);
    if (grads) soft_iou_gradient(preds[t].mask, gts[k].mask, scale, grads->mask[t]);
  }
  return loss;
}

/// Mean over matched pairs of -log p[class].
template <typename T>
double class_loss(const PredictionSequence<T>& preds, const std::vector<GroundTruthInstance>& gts,
                  const AssignmentMatrix& delta, PredictionGradients<T>* grads = nullptr, double scale = 1.0) {
  check_assignment(delta, preds.size(), gts.size());
  const int matched = delta.matched_count();
  if (matched == 0) return 0.0;
  double loss = 0.0;
  for (int t = 0; t < delta.rows(); ++t) {
    const int k = delta.col_of(t);
    if (k < 0) continue;
    const int cls = gts[k].class_id;
    if (cls < 0 || cls >= static_cast<int>(preds[t].class_probs.size())) {
      throw std::out_of_range("class id " + std::to_string(cls) + " outside prediction classes");
    }
    const double p = static_cast<double>(preds[t].class_probs[cls]);
    loss += -std::log(std::max(p, kEpsilon));
    if (grads && p > kEpsilon) grads->classes[t][cls] += static_cast<T>(-scale / (p * matched));
  }
  return loss / matched;
}

/// Mean over matched pairs and the 4 coordinates of squared differences.
template <typename T>
double box_loss(const PredictionSequence<T>& preds, const std::vector<GroundTruthInstance>& gts,
                const AssignmentMatrix& delta, PredictionGradients<T>* grads = nullptr, double scale = 1.0) {
  check_assignment(delta, preds.size(), gts.size());
  const int matched = delta.matched_count();
  if (matched == 0) return 0.0;
  double loss = 0.0;
  for (int t = 0; t < delta.rows(); ++t) {
    const int k = delta.col_of(t);
    if (k < 0) continue;
    for (int j = 0; j < 4; ++j) {
      const double d = static_cast<double>(preds[t].box[j]) - gts[k].box[j];
      loss += d * d;
      if (grads) grads->box[t][j] += static_cast<T>(scale * 2.0 * d / (4.0 * matched));
    }
  }
  return loss / (4.0 * matched);
}

/// Mean binary cross entropy against the target 1{t <= n}.
template <typename T>
double stop_loss(const std::vector<T>& scores, int n, std::vector<T>* grads = nullptr, double scale = 1.0) {
  if (scores.empty()) return 0.0;
  const double steps = static_cast<double>(scores.size());
  double loss = 0.0;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    const double raw = static_cast<double>(scores[t]);
    const double s = std::clamp(raw, kEpsilon, 1.0 - kEpsilon);
    const bool target = static_cast<int>(t) < n;
    loss += target ? -std::log(s) : -std::log(1.0 - s);
    if (grads && raw == s) (*grads)[t] += static_cast<T>(scale * (target ? -1.0 / s : 1.0 / (1.0 - s)) / steps);
  }
  return loss / steps;
}

/// Matches once with sIoU costs, then evaluates every term against that fixed assignment.
/// The assignment is a constant of the pass: no gradient flows through the matching.
template <typename T>
LossBreakdown total_loss(const PredictionSequence<T>& preds, const std::vector<GroundTruthInstance>& gts,
                         const LossWeights& weights, PredictionGradients<T>* grads = nullptr, double scale = 1.0) {
  LossBreakdown out;
  if (grads) grads->reset(preds);
  const auto& on = weights.active;
  PredictionGradients<T>* g = nullptr;

  std::vector<T> scores;
  for (const auto& p : preds.steps) scores.push_back(p.stop_score);
  out.l_s = stop_loss(scores, static_cast<int>(gts.size()), on.stop && grads ? &grads->stop : nullptr,
                      scale * weights.gamma);

  if (!gts.empty() && !preds.empty()) {
    out.assignment = hungarian_match(cost_matrix(preds, gts));
    g = on.mask ? grads : nullptr;
    out.l_m = mask_loss(preds, gts, out.assignment, g, scale);
    g = on.box ? grads : nullptr;
    out.l_b = box_loss(preds, gts, out.assignment, g, scale * weights.alpha);
    g = on.cls ? grads : nullptr;
    out.l_c = class_loss(preds, gts, out.assignment, g, scale * weights.lambda);
  } else {
    out.assignment = AssignmentMatrix(static_cast<int>(preds.size()), static_cast<int>(gts.size()));
  }
  out.total = (on.mask ? out.l_m : 0.0) + (on.box ? weights.alpha * out.l_b : 0.0) +
              (on.cls ? weights.lambda * out.l_c : 0.0) + (on.stop ? weights.gamma * out.l_s : 0.0);
  return out;
}

}  // namespace seqseg::objective
