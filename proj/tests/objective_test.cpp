#include <gtest/gtest.h>

#include <random>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "seqseg/core/mask_ops.hpp"
#include "seqseg/objective/losses.hpp"

using namespace seqseg;
using namespace seqseg::objective;
using seqseg::testing::rect_mask;

namespace {

GroundTruthInstance gt_of(BinaryMask m, int cls = 0) {
  GroundTruthInstance g;
  g.box = box_from_mask(m);
  g.mask = std::move(m);
  g.class_id = cls;
  return g;
}

InstancePrediction<double> pred_of(const BinaryMask& m, int classes = 3, int cls = 0) {
  InstancePrediction<double> p;
  p.mask = to_tensor<double>(m);
  p.box = {0, 0, 1, 1};
  p.box = box_from_mask(m);
  p.class_probs.assign(classes, 0.0);
  p.class_probs[cls] = 1.0;
  p.stop_score = 0.5;
  return p;
}

CostMatrix from_rows(const std::vector<std::vector<double>>& rows) {
  CostMatrix c(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int r = 0; r < c.rows; ++r)
    for (int k = 0; k < c.cols; ++k) c(r, k) = rows[r][k];
  return c;
}

std::vector<std::vector<double>> random_costs(std::mt19937_64& rng, int rows, int cols) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::vector<double>> c(rows, std::vector<double>(cols));
  for (auto& r : c)
    for (auto& v : r) v = u(rng);
  return c;
}

}  // namespace

TEST(SoftIou, Examples) {
  const auto m = rect_mask(4, 4, 0, 0, 2, 2);
  EXPECT_EQ(soft_iou_loss(to_tensor<double>(m), m), 0.0);
  EXPECT_EQ(soft_iou_loss(to_tensor<double>(m), rect_mask(4, 4, 2, 2, 4, 4)), 1.0);
  Tensor<double> ones(1, 2, 2, 1.0);
  EXPECT_DOUBLE_EQ(soft_iou_loss(ones, rect_mask(2, 2, 0, 0, 1, 2)), 0.5);
  EXPECT_EQ(soft_iou_loss(Tensor<double>(1, 2, 2), BinaryMask(2, 2)), 0.0);
}

TEST(SoftIou, MatchesScalarFormulaOnRandomPairs) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor<double> p(1, 7, 5);
    for (auto& v : p.values()) v = u(rng);
    BinaryMask y(7, 5);
    for (auto& v : y.data) v = u(rng) < 0.4;
    y.at(0, 0) = 1;
    std::vector<double> pv(p.data(), p.data() + p.size()), yv(y.data.begin(), y.data.end());
    const double ref = seqseg::testing::soft_iou_reference(pv, yv);
    EXPECT_LT(std::abs(soft_iou_loss(p, y) - ref) / ref, 1e-10);
  }
}

TEST(SoftIou, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Tensor<double> p(1, 4, 5);
  for (auto& v : p.values()) v = u(rng);
  const auto y = rect_mask(4, 5, 1, 1, 3, 4);
  Tensor<double> grad(1, 4, 5);
  soft_iou_gradient(p, y, 1.0, grad);
  std::vector<double*> entries;
  for (auto& v : p.values()) entries.push_back(&v);
  const auto r = seqseg::testing::check_entries("p", entries, {grad.data(), grad.data() + grad.size()},
                                                [&] { return soft_iou_loss(p, y); });
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

TEST(CostMatrix, Examples) {
  const auto a = rect_mask(6, 6, 0, 0, 3, 3), b = rect_mask(6, 6, 2, 2, 6, 6);
  PredictionSequence<double> one{{pred_of(a)}};
  EXPECT_EQ(cost_matrix(one, {gt_of(a)}).values, std::vector<double>{0.0});

  PredictionSequence<double> two{{pred_of(a), pred_of(b)}};
  two[1].mask.fill(0.25);
  const auto c = cost_matrix(two, {gt_of(a), gt_of(b)});
  for (int r = 0; r < 2; ++r) {
    for (int k = 0; k < 2; ++k) {
      const auto& gm = (k == 0 ? a : b);
      std::vector<double> pv(two[r].mask.data(), two[r].mask.data() + 36), yv(gm.data.begin(), gm.data.end());
      EXPECT_NEAR(c(r, k), seqseg::testing::soft_iou_reference(pv, yv), 1e-12);
      EXPECT_GE(c(r, k), 0.0);
      EXPECT_LE(c(r, k), 1.0);
    }
  }
}

TEST(Hungarian, Examples) {
  const auto d1 = hungarian_match(from_rows({{0, 1}, {1, 0}}));
  EXPECT_TRUE(d1(0, 0) && d1(1, 1));
  const auto cost = from_rows({{0.9, 0.1}, {0.2, 0.8}});
  const auto d2 = hungarian_match(cost);
  EXPECT_EQ(d2.col_of(0), 1);
  EXPECT_EQ(d2.col_of(1), 0);
  EXPECT_NEAR(assignment_cost(cost, d2), 0.3, 1e-15);
  EXPECT_THROW(hungarian_match(CostMatrix()), EmptyInputError);
}

TEST(Hungarian, Random6x6MatchesAllPermutations) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rows = random_costs(rng, 6, 6);
    const auto cost = from_rows(rows);
    EXPECT_NEAR(assignment_cost(cost, hungarian_match(cost)), seqseg::testing::brute_force_assignment(rows), 1e-12);
  }
}

TEST(Hungarian, RectangularInvariantsAndOptimality) {
  std::mt19937_64 rng(24);
  std::uniform_int_distribution<int> dim(1, 7);
  for (int trial = 0; trial < 300; ++trial) {
    const int r = dim(rng), c = dim(rng);
    const auto rows = random_costs(rng, r, c);
    const auto cost = from_rows(rows);
    const auto d = hungarian_match(cost);
    EXPECT_EQ(d.matched_count(), std::min(r, c));
    for (int i = 0; i < r; ++i) {
      int row_sum = 0;
      for (int k = 0; k < c; ++k) row_sum += d(i, k);
      EXPECT_LE(row_sum, 1);
    }
    for (int k = 0; k < c; ++k) {
      int col_sum = 0;
      for (int i = 0; i < r; ++i) col_sum += d(i, k);
      EXPECT_LE(col_sum, 1);
    }
    const double best = seqseg::testing::brute_force_assignment(rows);
    EXPECT_NEAR(assignment_cost(cost, d), best, 1e-12);

    // Shifting every cost by a constant keeps the selected assignment optimal.
    auto shifted = cost;
    for (auto& v : shifted.values) v += 3.5;
    const auto ds = hungarian_match(shifted);
    EXPECT_NEAR(assignment_cost(cost, ds), best, 1e-12);
  }
}

TEST(MaskLoss, Examples) {
  const auto a = rect_mask(4, 4, 0, 0, 2, 2), b = rect_mask(4, 4, 2, 2, 4, 4);
  PredictionSequence<double> perfect{{pred_of(a), pred_of(b)}};
  AssignmentMatrix d(2, 2);
  d.assign(0, 0);
  d.assign(1, 1);
  EXPECT_EQ(mask_loss(perfect, {gt_of(a), gt_of(b)}, d), 0.0);

  PredictionSequence<double> half{{pred_of(a)}};
  half[0].mask = Tensor<double>(1, 2, 2, 1.0);
  AssignmentMatrix d1(1, 1);
  d1.assign(0, 0);
  EXPECT_DOUBLE_EQ(mask_loss(half, {gt_of(rect_mask(2, 2, 0, 0, 1, 2))}, d1), 0.5);
}

TEST(MaskLoss, UnmatchedPredictionDoesNotContribute) {
  const auto a = rect_mask(5, 5, 0, 0, 2, 2), b = rect_mask(5, 5, 3, 3, 5, 5);
  PredictionSequence<double> preds{{pred_of(a), pred_of(b), pred_of(a)}};
  preds[0].mask.fill(0.6);
  const std::vector<GroundTruthInstance> gts{gt_of(a), gt_of(b)};
  const auto d = hungarian_match(cost_matrix(preds, gts));
  const int unmatched = d.col_of(0) < 0 ? 0 : (d.col_of(1) < 0 ? 1 : 2);
  const double before = mask_loss(preds, gts, d);
  preds[unmatched].mask.fill(0.123);
  EXPECT_EQ(mask_loss(preds, gts, d), before);
}

TEST(ClassLoss, Examples) {
  const auto a = rect_mask(4, 4, 0, 0, 2, 2), b = rect_mask(4, 4, 2, 2, 4, 4);
  PredictionSequence<double> preds{{pred_of(a, 4, 1)}};
  AssignmentMatrix d(1, 1);
  d.assign(0, 0);
  EXPECT_EQ(class_loss(preds, {gt_of(a, 1)}, d), 0.0);
  preds[0].class_probs.assign(4, 0.25);
  EXPECT_NEAR(class_loss(preds, {gt_of(a, 1)}, d), std::log(4.0), 1e-12);

  PredictionSequence<double> two{{pred_of(a, 3), pred_of(b, 3)}};
  two[0].class_probs = {0.7, 0.2, 0.1};
  two[1].class_probs = {0.1, 0.1, 0.8};
  AssignmentMatrix d2(2, 2);
  d2.assign(0, 0);
  d2.assign(1, 1);
  EXPECT_NEAR(class_loss(two, {gt_of(a, 0), gt_of(b, 2)}, d2), (-std::log(0.7) - std::log(0.8)) / 2, 1e-12);
}

TEST(BoxLoss, Examples) {
  const auto full = rect_mask(4, 4, 0, 0, 4, 4), left = rect_mask(4, 4, 0, 0, 4, 2);
  PredictionSequence<double> preds{{pred_of(full)}};
  AssignmentMatrix d(1, 1);
  d.assign(0, 0);
  EXPECT_EQ(box_loss(preds, {gt_of(full)}, d), 0.0);
  EXPECT_DOUBLE_EQ(box_loss(preds, {gt_of(left)}, d), 0.0625);
  PredictionSequence<double> swapped{{pred_of(left)}};
  EXPECT_DOUBLE_EQ(box_loss(swapped, {gt_of(full)}, d), 0.0625);
}

TEST(StopLoss, Examples) {
  std::vector<double> scores{0.9, 0.8, 0.7, 0.2, 0.1};
  std::vector<double> grads(5, 0.0);
  stop_loss(scores, 3, &grads);
  // Target (1,1,1,0,0): negative gradient for the first three, positive after.
  for (int t = 0; t < 3; ++t) EXPECT_LT(grads[t], 0.0);
  for (int t = 3; t < 5; ++t) EXPECT_GT(grads[t], 0.0);

  EXPECT_LT(stop_loss(std::vector<double>{1.0, 1.0, 0.0}, 2), 1e-6);
  EXPECT_NEAR(stop_loss(std::vector<double>(4, 0.5), 2), std::log(2.0), 1e-12);
}

TEST(TotalLoss, ExamplesAndStaging) {
  const auto a = rect_mask(6, 6, 0, 0, 3, 3), b = rect_mask(6, 6, 3, 3, 6, 6);
  std::vector<GroundTruthInstance> gts{gt_of(a, 1), gt_of(b, 2)};
  PredictionSequence<double> perfect{{pred_of(b, 3, 2), pred_of(a, 3, 1)}};
  perfect[0].stop_score = 1.0;
  perfect[1].stop_score = 1.0;
  EXPECT_LT(total_loss(perfect, gts, LossWeights{}).total, 1e-6);

  PredictionSequence<double> noisy = perfect;
  noisy[0].mask.fill(0.4);
  noisy[0].class_probs = {0.3, 0.3, 0.4};
  noisy[0].box = {0.1, 0.2, 0.3, 0.4};
  noisy[1].stop_score = 0.6;

  LossWeights mask_only{0, 0, 0, {}};
  const auto lm = total_loss(noisy, gts, mask_only);
  EXPECT_DOUBLE_EQ(lm.total, lm.l_m);

  LossWeights staged;
  staged.gamma = 0.7;
  staged.active = {true, false, false, true};
  const auto ls = total_loss(noisy, gts, staged);
  EXPECT_DOUBLE_EQ(ls.total, ls.l_m + 0.7 * ls.l_s);
  EXPECT_GT(ls.l_b, 0.0);
  EXPECT_GT(ls.l_c, 0.0);
}

TEST(TotalLoss, NoGroundTruthOnlyStopTerm) {
  PredictionSequence<double> preds{{pred_of(rect_mask(4, 4, 0, 0, 2, 2))}};
  preds[0].stop_score = 0.5;
  const auto r = total_loss(preds, {}, LossWeights{});
  EXPECT_EQ(r.l_m, 0.0);
  EXPECT_NEAR(r.total, std::log(2.0), 1e-12);
  EXPECT_EQ(r.assignment.matched_count(), 0);
}

TEST(TotalLoss, MaskLossInvariantToGroundTruthOrder) {
  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<GroundTruthInstance> gts{gt_of(rect_mask(8, 8, 0, 0, 4, 4)), gt_of(rect_mask(8, 8, 4, 0, 8, 5)),
                                       gt_of(rect_mask(8, 8, 1, 5, 7, 8))};
  for (int trial = 0; trial < 20; ++trial) {
    PredictionSequence<double> preds;
    for (int t = 0; t < 4; ++t) {
      auto p = pred_of(gts[0].mask);
      for (auto& v : p.mask.values()) v = u(rng);
      preds.steps.push_back(p);
    }
    const double base = total_loss(preds, gts, LossWeights{}).l_m;
    auto perm = gts;
    std::shuffle(perm.begin(), perm.end(), rng);
    EXPECT_NEAR(total_loss(preds, perm, LossWeights{}).l_m, base, 1e-12);
  }
}

TEST(TotalLoss, GradientsAtFixedAssignment) {
  std::mt19937_64 rng(26);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<GroundTruthInstance> gts{gt_of(rect_mask(5, 5, 0, 0, 3, 3), 0), gt_of(rect_mask(5, 5, 2, 2, 5, 5), 2)};
  PredictionSequence<double> preds;
  for (int t = 0; t < 4; ++t) {
    InstancePrediction<double> p;
    p.mask = Tensor<double>(1, 5, 5);
    for (auto& v : p.mask.values()) v = u(rng);
    for (auto& v : p.box) v = u(rng);
    p.class_probs = {u(rng), u(rng), u(rng)};
    p.stop_score = u(rng);
    preds.steps.push_back(p);
  }
  LossWeights w{0.5, 0.8, 1.3, {}};
  PredictionGradients<double> grads;
  const auto base = total_loss(preds, gts, w, &grads);

  std::vector<double*> entries;
  std::vector<double> analytic;
  for (int t = 0; t < 4; ++t) {
    for (std::size_t i = 0; i < preds[t].mask.size(); ++i) {
      entries.push_back(&preds[t].mask[i]);
      analytic.push_back(grads.mask[t][i]);
    }
    for (int k = 0; k < 4; ++k) {
      entries.push_back(&preds[t].box[k]);
      analytic.push_back(grads.box[t][k]);
    }
    for (int k = 0; k < 3; ++k) {
      entries.push_back(&preds[t].class_probs[k]);
      analytic.push_back(grads.classes[t][k]);
    }
    entries.push_back(&preds[t].stop_score);
    analytic.push_back(grads.stop[t]);
  }
  const auto fixed = [&] {
    const auto& d = base.assignment;
    std::vector<double> scores;
    for (const auto& p : preds.steps) scores.push_back(p.stop_score);
    return mask_loss(preds, gts, d) + w.alpha * box_loss(preds, gts, d) + w.lambda * class_loss(preds, gts, d) +
           w.gamma * stop_loss(scores, 2);
  };
  const auto r = seqseg::testing::check_entries("pred", entries, analytic, fixed);
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;

  // Steps without a match receive no mask, box, or class gradient.
  for (int t = 0; t < 4; ++t) {
    if (base.assignment.col_of(t) >= 0) continue;
    for (double v : grads.mask[t].values()) EXPECT_EQ(v, 0.0);
    for (double v : grads.box[t]) EXPECT_EQ(v, 0.0);
    for (double v : grads.classes[t]) EXPECT_EQ(v, 0.0);
  }
}
