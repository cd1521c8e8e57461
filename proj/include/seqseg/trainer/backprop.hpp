#pragma once

#include <vector>

#include "seqseg/model/network.hpp"
#include "seqseg/objective/losses.hpp"

namespace seqseg::trainer {

using model::Network;

/// Forward unroll, loss, and backward for one image. Parameter gradients are
/// accumulated (scaled by `scale`) into `net.params`.
template <typename T>
objective::LossBreakdown accumulate_gradients(Network<T>& net, const ImageSample& image,
                                              const std::vector<GroundTruthInstance>& gts, int steps,
                                              const objective::LossWeights& weights, double scale = 1.0) {
  autodiff::Graph<T> g(true);
  model::BoundParameters<T> params(g, net.params);
  const model::UnrolledVars u = model::unroll(params, net, image, steps);
  PredictionSequence<T> preds;
  for (const auto& s : u.steps) preds.steps.push_back(model::read_prediction(g, s));

  objective::PredictionGradients<T> grads;
  const auto breakdown = objective::total_loss(preds, gts, weights, &grads, scale);
  for (std::size_t t = 0; t < u.steps.size(); ++t) {
    const auto& s = u.steps[t];
    g.accumulate(s.mask, grads.mask[t]);
    Tensor<T> box = Tensor<T>::vector(4);
    for (int k = 0; k < 4; ++k) box[k] = grads.box[t][k];
    g.accumulate(s.box, box);
    Tensor<T> cls = Tensor<T>::vector(static_cast<int>(grads.classes[t].size()));
    for (std::size_t k = 0; k < grads.classes[t].size(); ++k) cls[k] = grads.classes[t][k];
    g.accumulate(s.classes, cls);
    g.accumulate(s.stop, Tensor<T>::vector(1, grads.stop[t]));
  }
  g.backward();
  return breakdown;
}

/// Loss of one image without gradients.
template <typename T>
objective::LossBreakdown evaluate_loss(const Network<T>& net, const ImageSample& image,
                                       const std::vector<GroundTruthInstance>& gts, int steps,
                                       const objective::LossWeights& weights) {
  return objective::total_loss(model::unroll(net, image, steps), gts, weights);
}

}  // namespace seqseg::trainer
