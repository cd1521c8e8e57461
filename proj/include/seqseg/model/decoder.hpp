#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "seqseg/autodiff/ops.hpp"
#include "seqseg/core/types.hpp"
#include "seqseg/model/config.hpp"
#include "seqseg/model/encoder.hpp"
#include "seqseg/model/parameters.hpp"

namespace seqseg::model {

inline std::string decoder_param(const std::string& part, int layer, const char* kind) {
  return "decoder." + part + std::to_string(layer) + "." + kind;
}

template <typename T>
void add_decoder_parameters(ParameterStore<T>& store, const EncoderConfig& enc, const DecoderConfig& dec,
                            std::mt19937_64& rng) {
  dec.validate(enc);
  const int layers = dec.layers(enc);
  for (int i = 0; i < layers; ++i) {
    const int proj = dec.projection_channels(i);
    if (proj > 0) {
      const int fin = enc.feature_channels(i);
      store.add(decoder_param("proj", i, "weight"), init::uniform<T>(proj, fin, 1, std::sqrt(6.0 / (fin + proj)), rng));
      store.add(decoder_param("proj", i, "bias"), Tensor<T>::vector(proj));
    }
    const int hid = dec.hidden_channels(i);
    const int in = dec.input_channels(i) + hid;
    const double lim = std::sqrt(6.0 / (9 * (in + 4 * hid)));
    store.add(decoder_param("lstm", i, "weight"), init::uniform<T>(4 * hid, in, 9, lim, rng));
    Tensor<T> bias = Tensor<T>::vector(4 * hid);
    for (int c = hid; c < 2 * hid; ++c) bias[c] = T(1);  // forget gate
    store.add(decoder_param("lstm", i, "bias"), std::move(bias));
  }
  const int last = dec.hidden_channels(layers - 1);
  store.add("decoder.mask.weight", init::uniform<T>(1, last, 1, std::sqrt(6.0 / (last + 1)), rng));
  store.add("decoder.mask.bias", Tensor<T>::vector(1));
  const int pooled = dec.pooled_size(enc);
  const auto head = [&](const char* name, int out) {
    store.add(std::string("heads.") + name + ".weight",
              init::uniform<T>(out, pooled, 1, std::sqrt(6.0 / (pooled + out)), rng));
    store.add(std::string("heads.") + name + ".bias", Tensor<T>::vector(out));
  };
  head("box", 4);
  head("class", dec.classes);
  head("stop", 1);
}

/// Hidden and cell graph nodes per ConvLSTM layer.
struct StateVars {
  std::vector<Var> hidden;
  std::vector<Var> cell;
};

/// Hidden and cell tensors per ConvLSTM layer, carried across the steps of one image.
template <typename T>
struct DecoderState {
  std::vector<Tensor<T>> hidden;
  std::vector<Tensor<T>> cell;
};

struct StepVars {
  Var mask;
  Var box;
  Var classes;
  Var stop;
  Var pooled;
};

/// Zero state sized after the spatial ladder of the encoder features.
template <typename T>
DecoderState<T> zero_state(const EncoderConfig& enc, const DecoderConfig& dec, int height, int width) {
  DecoderState<T> s;
  for (int i = 0; i < dec.layers(enc); ++i) {
    const int stride = enc.feature_stride(i);
    s.hidden.emplace_back(dec.hidden_channels(i), height / stride, width / stride);
    s.cell.emplace_back(dec.hidden_channels(i), height / stride, width / stride);
  }
  return s;
}

template <typename T>
StateVars bind_state(Graph<T>& g, const DecoderState<T>& s) {
  StateVars v;
  for (std::size_t i = 0; i < s.hidden.size(); ++i) {
    v.hidden.push_back(g.constant(s.hidden[i]));
    v.cell.push_back(g.constant(s.cell[i]));
  }
  return v;
}

/// One ConvLSTM update: gates from a 3×3 convolution over [input | h].
template <typename T>
std::pair<Var, Var> convlstm_step(Graph<T>& g, Var input, Var hidden, Var cell, Var weight, Var bias) {
  const Tensor<T>& x = g.value(input);
  const Tensor<T>& h = g.value(hidden);
  if (x.height() != h.height() || x.width() != h.width() || !h.same_shape(g.value(cell))) {
    throw ShapeError("convlstm_step: input " + shape_string(x) + " state " + shape_string(h));
  }
  const Var gates = autodiff::conv2d(g, autodiff::concat_channels(g, {input, hidden}), weight, bias, 1);
  const Var next_cell = autodiff::lstm_cell_state(g, gates, cell);
  const Var next_hidden = autodiff::lstm_hidden(g, gates, next_cell);
  return {next_hidden, next_cell};
}

/// Projections S_i of the pyramid; invalid Var where a layer takes no skip.
template <typename T>
std::vector<Var> project_pyramid(BoundParameters<T>& params, const EncoderConfig& enc, const DecoderConfig& dec,
                                 const std::vector<Var>& features) {
  Graph<T>& g = params.graph();
  std::vector<Var> out(dec.layers(enc));
  for (int i = 0; i < dec.layers(enc); ++i) {
    if (dec.projection_channels(i) == 0) continue;
    out[i] = project(g, features[i], params(decoder_param("proj", i, "weight")),
                     params(decoder_param("proj", i, "bias")));
  }
  return out;
}

/// One decoder time step. Updates `state` in place and returns the prediction heads.
template <typename T>
StepVars decode_step(BoundParameters<T>& params, const EncoderConfig& enc, const DecoderConfig& dec,
                     const std::vector<Var>& projections, StateVars& state, int out_h, int out_w) {
  Graph<T>& g = params.graph();
  const int layers = dec.layers(enc);
  if (static_cast<int>(state.hidden.size()) != layers || static_cast<int>(projections.size()) != layers) {
    throw ShapeError("decode_step: expected " + std::to_string(layers) + " layers");
  }
  for (int i = 0; i < layers; ++i) {
    const Tensor<T>& h = g.value(state.hidden[i]);
    if (h.channels() != dec.hidden_channels(i) || h.height() * enc.feature_stride(i) != out_h ||
        h.width() * enc.feature_stride(i) != out_w) {
      throw ShapeError("decode_step: state of layer " + std::to_string(i) + " is " + shape_string(h));
    }
  }
  std::vector<Var> pooled;
  Var below;
  for (int i = 0; i < layers; ++i) {
    Var input;
    if (i == 0) {
      input = projections[0];
    } else {
      const Var up = autodiff::upsample2x(g, below);
      switch (dec.skip) {
        case SkipMode::concat: input = autodiff::concat_channels(g, {up, projections[i]}); break;
        case SkipMode::sum: input = autodiff::add(g, up, projections[i]); break;
        case SkipMode::mult: input = autodiff::mul(g, up, projections[i]); break;
        case SkipMode::none: input = up; break;
      }
    }
    auto [h, c] = convlstm_step(g, input, state.hidden[i], state.cell[i], params(decoder_param("lstm", i, "weight")),
                                params(decoder_param("lstm", i, "bias")));
    state.hidden[i] = h;
    state.cell[i] = c;
    pooled.push_back(autodiff::global_max_pool(g, h));
    below = h;
  }

  StepVars out;
  const Var full = autodiff::resize_bilinear(g, below, out_h, out_w);
  out.mask = autodiff::sigmoid(
      g, autodiff::conv2d(g, full, params("decoder.mask.weight"), params("decoder.mask.bias"), 1));
  out.pooled = autodiff::concat_channels(g, pooled);
  out.box = autodiff::sigmoid(g, autodiff::linear(g, out.pooled, params("heads.box.weight"), params("heads.box.bias")));
  out.classes =
      autodiff::softmax(g, autodiff::linear(g, out.pooled, params("heads.class.weight"), params("heads.class.bias")));
  out.stop =
      autodiff::sigmoid(g, autodiff::linear(g, out.pooled, params("heads.stop.weight"), params("heads.stop.bias")));
  return out;
}

template <typename T>
InstancePrediction<T> read_prediction(const Graph<T>& g, const StepVars& step) {
  InstancePrediction<T> p;
  p.mask = g.value(step.mask);
  const Tensor<T>& box = g.value(step.box);
  for (int k = 0; k < 4; ++k) p.box[k] = box[k];
  const Tensor<T>& cls = g.value(step.classes);
  p.class_probs.assign(cls.data(), cls.data() + cls.size());
  p.stop_score = g.value(step.stop)[0];
  return p;
}

}  // namespace seqseg::model
