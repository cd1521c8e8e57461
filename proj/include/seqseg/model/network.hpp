#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "seqseg/model/decoder.hpp"
#include "seqseg/model/encoder.hpp"

namespace seqseg::model {

template <typename T>
struct Network {
  EncoderConfig encoder;
  DecoderConfig decoder;
  ParameterStore<T> params;

  static Network create(const EncoderConfig& enc, const DecoderConfig& dec, std::uint64_t seed) {
    enc.validate();
    dec.validate(enc);
    Network net{enc, dec, {}};
    std::mt19937_64 rng(seed);
    add_encoder_parameters(net.params, enc, rng);
    add_decoder_parameters(net.params, enc, dec, rng);
    return net;
  }

  template <typename U>
  Network<U> cast() const {
    return Network<U>{encoder, decoder, params.template cast<U>()};
  }
};

/// Graph nodes of a full unrolled forward pass.
struct UnrolledVars {
  std::vector<Var> features;
  std::vector<Var> projections;
  std::vector<StepVars> steps;
  StateVars state;
};

/// Encoder pass and projections; the decoder then starts from a zero state.
template <typename T>
UnrolledVars begin_unroll(BoundParameters<T>& params, const Network<T>& net, const ImageSample& image) {
  Graph<T>& g = params.graph();
  UnrolledVars out;
  out.features = encode(params, net.encoder, g.constant(image_tensor<T>(image)));
  out.projections = project_pyramid(params, net.encoder, net.decoder, out.features);
  out.state = bind_state(g, zero_state<T>(net.encoder, net.decoder, image.height(), image.width()));
  return out;
}

/// Encodes once and applies `steps` decoder steps with a fixed pyramid input.
template <typename T>
UnrolledVars unroll(BoundParameters<T>& params, const Network<T>& net, const ImageSample& image, int steps) {
  if (steps < 1) throw std::invalid_argument("unroll: step count must be >= 1");
  UnrolledVars u = begin_unroll(params, net, image);
  for (int t = 0; t < steps; ++t) {
    u.steps.push_back(decode_step(params, net.encoder, net.decoder, u.projections, u.state, image.height(),
                                  image.width()));
  }
  return u;
}

template <typename T>
PredictionSequence<T> unroll(const Network<T>& net, const ImageSample& image, int steps) {
  Graph<T> g(false);
  BoundParameters<T> params(g, net.params);
  const UnrolledVars u = unroll(params, net, image, steps);
  PredictionSequence<T> seq;
  for (const auto& s : u.steps) seq.steps.push_back(read_prediction(g, s));
  return seq;
}

/// Value-level decoder step over precomputed projections (invalid entries are unused skips).
template <typename T>
std::pair<InstancePrediction<T>, DecoderState<T>> decode_step(const Network<T>& net,
                                                             const std::vector<Tensor<T>>& projections,
                                                             const DecoderState<T>& state, int out_h, int out_w) {
  Graph<T> g(false);
  BoundParameters<T> params(g, net.params);
  std::vector<Var> proj(projections.size());
  for (std::size_t i = 0; i < projections.size(); ++i) {
    if (!projections[i].empty()) proj[i] = g.constant(projections[i]);
  }
  StateVars s = bind_state(g, state);
  const StepVars step = decode_step(params, net.encoder, net.decoder, proj, s, out_h, out_w);
  DecoderState<T> next;
  for (std::size_t i = 0; i < s.hidden.size(); ++i) {
    next.hidden.push_back(g.value(s.hidden[i]));
    next.cell.push_back(g.value(s.cell[i]));
  }
  return {read_prediction(g, step), std::move(next)};
}

/// Projections S_i as values (empty tensor where no skip is consumed).
template <typename T>
std::vector<Tensor<T>> project_pyramid(const Network<T>& net, const FeaturePyramid<T>& pyramid) {
  Graph<T> g(false);
  BoundParameters<T> params(g, net.params);
  std::vector<Var> features;
  for (const auto& f : pyramid.features) features.push_back(g.constant(f));
  const auto proj = project_pyramid(params, net.encoder, net.decoder, features);
  std::vector<Tensor<T>> out(proj.size());
  for (std::size_t i = 0; i < proj.size(); ++i) {
    if (proj[i].valid()) out[i] = g.value(proj[i]);
  }
  return out;
}

/// Emits steps until the first stop score below `stop_threshold` (excluded) or `max_steps`.
template <typename T>
PredictionSequence<T> infer(const Network<T>& net, const ImageSample& image, double stop_threshold, int max_steps) {
  if (!(stop_threshold > 0.0 && stop_threshold < 1.0)) {
    throw std::invalid_argument("infer: stop threshold must be in (0,1)");
  }
  if (max_steps < 1) throw std::invalid_argument("infer: max steps must be >= 1");
  Graph<T> g(false);
  BoundParameters<T> params(g, net.params);
  UnrolledVars u = begin_unroll(params, net, image);
  PredictionSequence<T> seq;
  for (int t = 0; t < max_steps; ++t) {
    const StepVars step =
        decode_step(params, net.encoder, net.decoder, u.projections, u.state, image.height(), image.width());
    InstancePrediction<T> p = read_prediction(g, step);
    if (static_cast<double>(p.stop_score) < stop_threshold) break;
    seq.steps.push_back(std::move(p));
  }
  return seq;
}

/// Prefix rule of `infer` applied to an already computed sequence.
template <typename T>
PredictionSequence<T> truncate_at_stop(PredictionSequence<T> seq, double stop_threshold) {
  std::size_t keep = 0;
  while (keep < seq.size() && static_cast<double>(seq[keep].stop_score) >= stop_threshold) ++keep;
  seq.steps.resize(keep);
  return seq;
}

}  // namespace seqseg::model
