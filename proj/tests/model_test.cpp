#include <gtest/gtest.h>

#include <random>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "seqseg/core/mask_ops.hpp"
#include "seqseg/model/network.hpp"
#include "seqseg/trainer/backprop.hpp"

using namespace seqseg;
using namespace seqseg::model;
using seqseg::testing::random_tensor;

namespace {

ImageSample random_image(std::mt19937_64& rng, int h, int w) {
  return ImageSample{random_tensor<float>(rng, 3, h, w, 0.0, 1.0)};
}

Network<float> small_net(int blocks = 5, int hidden = 8, SkipMode skip = SkipMode::concat, int layers = 0) {
  EncoderConfig enc;
  enc.blocks = blocks;
  enc.base_channels = 4;
  DecoderConfig dec;
  dec.hidden = hidden;
  dec.skip = skip;
  dec.num_layers = layers;
  return Network<float>::create(enc, dec, 42);
}

/// Zero biases put pre-activations of dead units exactly on the ReLU kink,
/// where central differences are one-sided. Jitter them away from it.
template <typename T>
void jitter_biases(ParameterStore<T>& store, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.25);
  for (auto& e : store.entries()) {
    if (e.name.ends_with(".bias")) {
      for (auto& v : e.param.value.values()) v += static_cast<T>(u(rng));
    }
  }
}

/// Gradient check of a scalar loss over every network parameter.
seqseg::testing::GradCheckResult check_network(Network<double>& net, const std::function<double()>& loss,
                                               const std::function<void()>& backprop) {
  net.params.zero_grad();
  backprop();
  seqseg::testing::GradCheckResult total;
  for (auto& e : net.params.entries()) {
    std::vector<double*> entries;
    std::vector<double> analytic;
    for (std::size_t i = 0; i < e.param.value.size(); ++i) {
      entries.push_back(&e.param.value[i]);
      analytic.push_back(e.param.grad[i]);
    }
    seqseg::testing::merge(total, seqseg::testing::check_entries(e.name, entries, analytic, loss, 1e-5));
  }
  return total;
}

}  // namespace

TEST(Encoder, StrideLadder64) {
  std::mt19937_64 rng(1);
  const auto net = small_net();
  const auto pyr = encode(random_image(rng, 64, 64), net.encoder, net.params);
  ASSERT_EQ(pyr.size(), 5u);
  EXPECT_EQ(pyr[0].height(), 2);
  EXPECT_EQ(pyr[4].height(), 32);
  for (int i = 0; i + 1 < 5; ++i) {
    EXPECT_EQ(pyr[i + 1].height(), 2 * pyr[i].height());
    EXPECT_EQ(pyr[i + 1].width(), 2 * pyr[i].width());
  }
}

TEST(Encoder, StrideLadder256AndDeterminism) {
  std::mt19937_64 rng(2);
  const auto net = small_net();
  const auto image = random_image(rng, 256, 256);
  const auto a = encode(image, net.encoder, net.params);
  EXPECT_EQ(a[0].height(), 8);
  EXPECT_EQ(a[0].width(), 8);
  const auto b = encode(image, net.encoder, net.params);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Encoder, IndivisibleShapeThrows) {
  std::mt19937_64 rng(3);
  const auto net = small_net();
  EXPECT_THROW(encode(random_image(rng, 32, 48), net.encoder, net.params), ShapeError);
}

TEST(Encoder, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  EncoderConfig enc;
  enc.blocks = 3;
  enc.base_channels = 2;
  ParameterStore<double> store;
  std::mt19937_64 init(9);
  add_encoder_parameters(store, enc, init);
  jitter_biases(store, 10);
  const auto image = random_image(rng, 16, 16);
  for (int level = 0; level < 3; ++level) {
    std::mt19937_64 prng(100 + level);
    Tensor<double> probe;
    const auto eval = [&](bool grad) {
      Graph<double> g(grad);
      BoundParameters<double> params(g, store);
      const auto f = encode(params, enc, g.constant(image_tensor<double>(image)));
      const auto& v = g.value(f[level]);
      if (probe.empty()) probe = random_tensor<double>(prng, v.channels(), v.height(), v.width());
      double s = 0;
      for (std::size_t i = 0; i < v.size(); ++i) s += probe[i] * v[i];
      if (grad) {
        g.accumulate(f[level], probe);
        g.backward();
      }
      return s;
    };
    store.zero_grad();
    eval(true);
    seqseg::testing::GradCheckResult total;
    for (auto& e : store.entries()) {
      std::vector<double*> entries;
      std::vector<double> analytic;
      for (std::size_t i = 0; i < e.param.value.size(); ++i) {
        entries.push_back(&e.param.value[i]);
        analytic.push_back(e.param.grad[i]);
      }
      seqseg::testing::merge(total, seqseg::testing::check_entries(e.name, entries, analytic, [&] { return eval(false); }));
    }
    EXPECT_LT(total.max_rel_error, 1e-4) << "level " << level << ": " << total.worst << " checked " << total.checked;
  }
}

TEST(Project, ShapesAndIdentity) {
  std::mt19937_64 rng(5);
  const auto f = random_tensor<float>(rng, 256, 2, 2);
  EXPECT_EQ(shape_string(project(f, Tensor<float>(32, 256, 1), Tensor<float>::vector(32))), "32x2x2");
  const auto f2 = random_tensor<float>(rng, 64, 8, 8);
  EXPECT_EQ(shape_string(project(f2, Tensor<float>(16, 64, 1), Tensor<float>::vector(16))), "16x8x8");
  Tensor<float> eye(64, 64, 1);
  for (int c = 0; c < 64; ++c) eye(c, c, 0) = 1.0f;
  EXPECT_EQ(project(f2, eye, Tensor<float>::vector(64)), f2);
}

TEST(ConvLstm, ZeroInputStateWeights) {
  Graph<double> g(false);
  const auto [h, c] = convlstm_step(g, g.constant(Tensor<double>(3, 4, 4)), g.constant(Tensor<double>(2, 4, 4)),
                                    g.constant(Tensor<double>(2, 4, 4)), g.constant(Tensor<double>(8, 5, 9)),
                                    g.constant(Tensor<double>::vector(8)));
  for (double v : g.value(h).values()) EXPECT_EQ(v, 0.0);
  for (double v : g.value(c).values()) EXPECT_EQ(v, 0.0);
}

TEST(ConvLstm, ShapeContractAndMismatch) {
  std::mt19937_64 rng(6);
  Graph<float> g(false);
  const auto [h, c] = convlstm_step(g, g.constant(random_tensor<float>(rng, 16, 4, 4)), g.constant(Tensor<float>(8, 4, 4)),
                                    g.constant(Tensor<float>(8, 4, 4)), g.constant(random_tensor<float>(rng, 32, 24, 9)),
                                    g.constant(Tensor<float>::vector(32)));
  EXPECT_EQ(shape_string(g.value(h)), "8x4x4");
  EXPECT_EQ(shape_string(g.value(c)), "8x4x4");
  EXPECT_THROW(convlstm_step(g, g.constant(Tensor<float>(16, 2, 2)), g.constant(Tensor<float>(8, 4, 4)),
                             g.constant(Tensor<float>(8, 4, 4)), g.constant(Tensor<float>(32, 24, 9)),
                             g.constant(Tensor<float>::vector(32))),
               ShapeError);
}

TEST(ConvLstm, GradientOfHiddenNorm) {
  std::mt19937_64 rng(7);
  std::vector<Parameter<double>> ps;
  ps.emplace_back(random_tensor<double>(rng, 3, 4, 4));       // input
  ps.emplace_back(random_tensor<double>(rng, 2, 4, 4));       // h
  ps.emplace_back(random_tensor<double>(rng, 2, 4, 4));       // c
  ps.emplace_back(random_tensor<double>(rng, 8, 5, 9, -0.5, 0.5));  // weights
  ps.emplace_back(random_tensor<double>(rng, 8, 1, 1));       // bias
  const auto eval = [&](bool grad) {
    Graph<double> g(grad);
    std::vector<Var> v;
    for (auto& p : ps) v.push_back(grad ? g.parameter(p) : g.constant_ref(p.value));
    const auto [h, c] = convlstm_step(g, v[0], v[1], v[2], v[3], v[4]);
    double s = 0;
    for (double x : g.value(h).values()) s += x * x;
    if (grad) {
      Tensor<double> d = g.value(h);
      for (auto& x : d.values()) x *= 2;
      g.accumulate(h, d);
      g.backward();
    }
    return s;
  };
  for (auto& p : ps) p.zero_grad();
  eval(true);
  seqseg::testing::GradCheckResult total;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    std::vector<double*> entries;
    std::vector<double> analytic;
    for (std::size_t i = 0; i < ps[k].value.size(); ++i) {
      entries.push_back(&ps[k].value[i]);
      analytic.push_back(ps[k].grad[i]);
    }
    seqseg::testing::merge(total, seqseg::testing::check_entries("p", entries, analytic, [&] { return eval(false); }));
  }
  EXPECT_LT(total.max_rel_error, 1e-4) << total.worst;
}

TEST(Decoder, ChannelScheduleAndPooledSize) {
  DecoderConfig dec;
  dec.hidden = 32;
  EXPECT_EQ(dec.hidden_channels(0), 32);
  EXPECT_EQ(dec.hidden_channels(1), 32);
  EXPECT_EQ(dec.hidden_channels(2), 16);
  EXPECT_EQ(dec.hidden_channels(3), 8);
  EXPECT_EQ(dec.hidden_channels(4), 4);
  dec.hidden = 4;
  EXPECT_EQ(dec.hidden_channels(4), 2);
  EncoderConfig enc;
  EXPECT_EQ(dec.pooled_size(enc), 4 + 4 + 2 + 2 + 2);
  dec.skip = SkipMode::sum;
  EXPECT_EQ(dec.projection_channels(2), dec.hidden_channels(1));
  dec.skip = SkipMode::mult;
  EXPECT_EQ(dec.projection_channels(3), dec.hidden_channels(2));
}

TEST(Decoder, StepShapesAndHeadRanges) {
  std::mt19937_64 rng(8);
  for (SkipMode skip : {SkipMode::concat, SkipMode::sum, SkipMode::mult, SkipMode::none}) {
    const auto net = small_net(5, 8, skip);
    Graph<float> g(false);
    BoundParameters<float> params(g, net.params);
    const auto u = unroll(params, net, random_image(rng, 64, 64), 1);
    EXPECT_EQ(shape_string(g.value(u.steps[0].mask)), "1x64x64");
    EXPECT_EQ(g.value(u.state.hidden[0]).height(), 2);
    EXPECT_EQ(g.value(u.state.hidden[4]).height(), 32);
    EXPECT_EQ(g.value(u.steps[0].pooled).size(), static_cast<std::size_t>(net.decoder.pooled_size(net.encoder)));
    const auto p = read_prediction(g, u.steps[0]);
    for (float v : p.mask.values()) {
      EXPECT_GT(v, 0.0f);
      EXPECT_LT(v, 1.0f);
    }
    double sum = 0;
    for (float v : p.class_probs) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-6);
    for (float v : p.box) EXPECT_TRUE(v > 0 && v < 1);
    EXPECT_TRUE(p.stop_score > 0 && p.stop_score < 1);
  }
}

TEST(Decoder, TruncatedChainKeepsInputResolution) {
  std::mt19937_64 rng(9);
  for (int layers : {1, 2, 3}) {
    const auto net = small_net(5, 8, SkipMode::concat, layers);
    const auto seq = unroll(net, random_image(rng, 64, 64), 2);
    EXPECT_EQ(shape_string(seq[0].mask), "1x64x64");
  }
}

TEST(Decoder, NoSkipIgnoresShallowProjections) {
  std::mt19937_64 rng(10);
  const auto net = small_net(4, 8, SkipMode::none);
  const auto pyr = encode(random_image(rng, 32, 32), net.encoder, net.params);
  auto proj = project_pyramid(net, pyr);
  const auto state = zero_state<float>(net.encoder, net.decoder, 32, 32);
  const auto [a, sa] = decode_step(net, proj, state, 32, 32);
  for (std::size_t i = 1; i < proj.size(); ++i) proj[i] = random_tensor<float>(rng, 5, 3, 3);
  const auto [b, sb] = decode_step(net, proj, state, 32, 32);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.class_probs, b.class_probs);
}

TEST(Decoder, StateDependence) {
  std::mt19937_64 rng(11);
  const auto net = small_net(4, 8);
  const auto pyr = encode(random_image(rng, 32, 32), net.encoder, net.params);
  const auto proj = project_pyramid(net, pyr);
  const auto s0 = zero_state<float>(net.encoder, net.decoder, 32, 32);
  const auto [p1, s1] = decode_step(net, proj, s0, 32, 32);
  const auto [p2, s2] = decode_step(net, proj, s1, 32, 32);
  EXPECT_NE(p1.mask, p2.mask);
  EXPECT_THROW(decode_step(net, proj, zero_state<float>(net.encoder, net.decoder, 64, 64), 32, 32), ShapeError);
}

TEST(Unroll, LengthDeterminismAndPrefix) {
  std::mt19937_64 rng(12);
  const auto net = small_net(5, 8);
  const auto image = random_image(rng, 64, 64);
  EXPECT_EQ(unroll(net, image, 1).size(), 1u);
  const auto five = unroll(net, image, 5);
  const auto again = unroll(net, image, 5);
  ASSERT_EQ(five.size(), 5u);
  const auto three = unroll(net, image, 3);
  for (int t = 0; t < 5; ++t) {
    EXPECT_EQ(five[t].mask, again[t].mask);
    EXPECT_EQ(five[t].stop_score, again[t].stop_score);
  }
  for (int t = 0; t < 3; ++t) {
    EXPECT_EQ(three[t].mask, five[t].mask);
    EXPECT_EQ(three[t].class_probs, five[t].class_probs);
  }
  EXPECT_THROW(unroll(net, image, 0), std::invalid_argument);
}

TEST(Infer, PrefixRule) {
  PredictionSequence<float> seq;
  for (float s : {0.9f, 0.8f, 0.3f, 0.9f}) {
    InstancePrediction<float> p;
    p.stop_score = s;
    seq.steps.push_back(p);
  }
  EXPECT_EQ(truncate_at_stop(seq, 0.5).size(), 2u);
  seq[0].stop_score = 0.2f;
  EXPECT_EQ(truncate_at_stop(seq, 0.5).size(), 0u);
}

TEST(Infer, StopHeadControlsLength) {
  std::mt19937_64 rng(13);
  auto net = small_net(4, 8);
  const auto image = random_image(rng, 32, 32);
  auto& w = net.params.at("heads.stop.weight").value;
  auto& b = net.params.at("heads.stop.bias").value;
  w.fill(0.0f);
  b[0] = 10.0f;
  EXPECT_EQ(infer(net, image, 0.5, 6).size(), 6u);
  b[0] = -10.0f;
  EXPECT_TRUE(infer(net, image, 0.5, 6).empty());
  // The retained prefix equals the unrolled sequence truncated at the first low score.
  b[0] = 0.0f;
  w.fill(0.3f);
  const auto inferred = infer(net, image, 0.5, 4);
  const auto truncated = truncate_at_stop(unroll(net, image, 4), 0.5);
  ASSERT_EQ(inferred.size(), truncated.size());
  for (std::size_t t = 0; t < inferred.size(); ++t) EXPECT_EQ(inferred[t].mask, truncated[t].mask);
}

TEST(EndToEnd, TotalLossGradientAllSkipModes) {
  std::mt19937_64 rng(14);
  const auto image = random_image(rng, 8, 8);
  std::vector<GroundTruthInstance> gts;
  for (auto [y0, x0, y1, x1, cls] : {std::array<int, 5>{0, 0, 4, 5, 1}, std::array<int, 5>{4, 3, 8, 8, 2}}) {
    GroundTruthInstance g;
    g.mask = seqseg::testing::rect_mask(8, 8, y0, x0, y1, x1);
    g.box = box_from_mask(g.mask);
    g.class_id = cls;
    gts.push_back(g);
  }
  for (SkipMode skip : {SkipMode::concat, SkipMode::sum, SkipMode::mult, SkipMode::none}) {
    EncoderConfig enc;
    enc.blocks = 3;
    enc.base_channels = 2;
    DecoderConfig dec;
    dec.hidden = 4;
    dec.skip = skip;
    auto net = Network<double>::create(enc, dec, 77);
    jitter_biases(net.params, 78);
    const objective::LossWeights weights{0.7, 0.9, 1.1, {}};
    const auto result = check_network(
        net, [&] { return trainer::evaluate_loss(net, image, gts, 2, weights).total; },
        [&] { trainer::accumulate_gradients(net, image, gts, 2, weights); });
    EXPECT_LT(result.max_rel_error, 1e-4) << to_string(skip) << ": " << result.worst << " abs " << result.max_abs_error;
  }
}
