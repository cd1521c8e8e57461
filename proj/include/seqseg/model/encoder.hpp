#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "seqseg/autodiff/ops.hpp"
#include "seqseg/core/types.hpp"
#include "seqseg/model/config.hpp"
#include "seqseg/model/parameters.hpp"

namespace seqseg::model {

/// Encoder activations f_0 (deepest, smallest) ... f_{n_b-1} (shallowest).
template <typename T>
struct FeaturePyramid {
  std::vector<Tensor<T>> features;

  std::size_t size() const noexcept { return features.size(); }
  const Tensor<T>& operator[](std::size_t i) const { return features[i]; }
};

inline std::string encoder_param(int block, const char* conv, const char* kind) {
  return "encoder.block" + std::to_string(block) + "." + conv + "." + kind;
}

/// Block j (counted from the image) = [3×3 conv, ReLU, 3×3 conv stride 2, ReLU] and emits f_{n_b-1-j}.
template <typename T>
void add_encoder_parameters(ParameterStore<T>& store, const EncoderConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  int in = cfg.in_channels;
  for (int j = 0; j < cfg.blocks; ++j) {
    const int out = cfg.feature_channels(cfg.blocks - 1 - j);
    const double lim1 = std::sqrt(6.0 / (in * 9));
    store.add(encoder_param(j, "conv1", "weight"), init::uniform<T>(out, in, 9, lim1, rng));
    store.add(encoder_param(j, "conv1", "bias"), Tensor<T>::vector(out));
    const double lim2 = std::sqrt(6.0 / (out * 9));
    store.add(encoder_param(j, "conv2", "weight"), init::uniform<T>(out, out, 9, lim2, rng));
    store.add(encoder_param(j, "conv2", "bias"), Tensor<T>::vector(out));
    in = out;
  }
}

inline void check_image_dims(int height, int width, const EncoderConfig& cfg) {
  const int stride = 1 << cfg.blocks;
  if (height < stride || width < stride || height % stride != 0 || width % stride != 0) {
    throw ShapeError("image " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by 2^" + std::to_string(cfg.blocks));
  }
}

/// Returns graph nodes for f_0 ... f_{n_b-1}.
template <typename T>
std::vector<Var> encode(BoundParameters<T>& params, const EncoderConfig& cfg, Var image) {
  Graph<T>& g = params.graph();
  const Tensor<T>& x = g.value(image);
  if (x.channels() != cfg.in_channels) {
    throw ShapeError("encoder expects " + std::to_string(cfg.in_channels) + " input channels, got " +
                     std::to_string(x.channels()));
  }
  check_image_dims(x.height(), x.width(), cfg);
  std::vector<Var> features(cfg.blocks);
  Var h = image;
  for (int j = 0; j < cfg.blocks; ++j) {
    h = autodiff::relu(g, autodiff::conv2d(g, h, params(encoder_param(j, "conv1", "weight")),
                                           params(encoder_param(j, "conv1", "bias")), 1));
    h = autodiff::relu(g, autodiff::conv2d(g, h, params(encoder_param(j, "conv2", "weight")),
                                           params(encoder_param(j, "conv2", "bias")), 2));
    features[cfg.blocks - 1 - j] = h;
  }
  return features;
}

template <typename T>
Tensor<T> image_tensor(const ImageSample& image) {
  return image.pixels.template cast<T>();
}

template <typename T>
FeaturePyramid<T> encode(const ImageSample& image, const EncoderConfig& cfg, const ParameterStore<T>& weights) {
  Graph<T> g(false);
  BoundParameters<T> params(g, weights);
  const auto vars = encode(params, cfg, g.constant(image_tensor<T>(image)));
  FeaturePyramid<T> out;
  for (Var v : vars) out.features.push_back(g.value(v));
  return out;
}

/// 1×1 convolution of a feature map to `weight.channels()` channels.
template <typename T>
Var project(Graph<T>& g, Var feature, Var weight, Var bias) {
  return autodiff::conv2d(g, feature, weight, bias, 1);
}

template <typename T>
Tensor<T> project(const Tensor<T>& feature, const Tensor<T>& weight, const Tensor<T>& bias) {
  Graph<T> g(false);
  return g.value(project(g, g.constant_ref(feature), g.constant_ref(weight), g.constant_ref(bias)));
}

}  // namespace seqseg::model
