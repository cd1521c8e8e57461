#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "seqseg/trainer/trainer.hpp"
#include "tmpdir.hpp"

using namespace seqseg;
using namespace seqseg::trainer;

namespace {

std::vector<data::DatasetRecord> tiny_set(std::size_t n, std::uint64_t seed) {
  data::ShapesSpec spec;
  spec.height = spec.width = 32;
  spec.seed = seed;
  std::vector<data::DatasetRecord> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(data::generate_sample(spec, i));
  return out;
}

model::Network<float> tiny_net(std::uint64_t seed = 3) {
  model::EncoderConfig enc;
  enc.blocks = 3;
  enc.base_channels = 4;
  model::DecoderConfig dec;
  dec.hidden = 8;
  return model::Network<float>::create(enc, dec, seed);
}

GroundTruthInstance square(int side, int y0, int x0) {
  GroundTruthInstance g;
  g.mask = seqseg::testing::rect_mask(32, 32, y0, x0, y0 + side, x0 + side);
  g.box = box_from_mask(g.mask);
  return g;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(Curriculum, FewInstancesKept) {
  const std::vector<GroundTruthInstance> gts{square(3, 0, 0), square(5, 10, 10)};
  EXPECT_EQ(curriculum_filter(gts, 4), gts);
}

TEST(Curriculum, KeepsLargestByArea) {
  std::vector<GroundTruthInstance> gts;
  for (int side : {3, 7, 2, 6, 4, 5}) gts.push_back(square(side, side, side));
  const auto kept = curriculum_filter(gts, 2);
  std::vector<long> areas;
  for (const auto& g : gts) areas.push_back(g.mask.area());
  std::sort(areas.rbegin(), areas.rend());
  ASSERT_EQ(kept.size(), 2u);
  std::vector<long> got{kept[0].mask.area(), kept[1].mask.area()};
  std::sort(got.rbegin(), got.rend());
  EXPECT_EQ(got, (std::vector<long>{areas[0], areas[1]}));
  EXPECT_THROW(curriculum_filter(gts, 1), std::invalid_argument);
}

TEST(Plateau, ImprovingNeverAdvances) {
  CurriculumState s;
  double loss = 10.0;
  for (int e = 0; e < 50; ++e) {
    const auto r = plateau_check(s, loss);
    EXPECT_FALSE(r.advanced);
    s = r.state;
    loss *= 0.99;
  }
  EXPECT_EQ(s.current_max_objects, 2);
}

TEST(Plateau, ConstantLossAdvancesEveryPatienceEpochs) {
  CurriculumState s;
  s.patience = 3;
  std::vector<int> advanced_at;
  for (int e = 1; e <= 7; ++e) {
    const auto r = plateau_check(s, 1.0);
    if (r.advanced) advanced_at.push_back(e);
    s = r.state;
  }
  // Epoch 1 sets the baseline; epochs 2..4 stall; epochs 5..7 stall again.
  EXPECT_EQ(advanced_at, (std::vector<int>{4, 7}));
  EXPECT_EQ(s.current_max_objects, 4);
}

TEST(Plateau, BoundaryImprovementCounts) {
  CurriculumState s;
  s.patience = 1;
  s.best_val = 2.0;
  auto r = plateau_check(s, 2.0 * (1.0 - s.plateau_eps));
  EXPECT_FALSE(r.advanced);
  EXPECT_EQ(r.state.epochs_since_best, 0);
  r = plateau_check(r.state, r.state.best_val * (1.0 - s.plateau_eps / 2));
  EXPECT_TRUE(r.advanced);
  EXPECT_THROW(plateau_check(s, std::nan("")), std::invalid_argument);
}

TEST(Plateau, CapStopsAdvancing) {
  CurriculumState s;
  s.patience = 1;
  s.max_objects_cap = 3;
  for (int e = 0; e < 10; ++e) s = plateau_check(s, 1.0).state;
  EXPECT_EQ(s.current_max_objects, 3);
}

TEST(Staging, DefaultOrder) {
  const LossStaging st;
  EXPECT_EQ(st.at(0), (objective::ActiveTerms{true, false, false, false}));
  EXPECT_EQ(st.at(1), (objective::ActiveTerms{true, false, false, true}));
  EXPECT_EQ(st.at(2), (objective::ActiveTerms{true, false, true, true}));
  EXPECT_EQ(st.at(3), (objective::ActiveTerms{true, true, true, true}));
}

TEST(Staging, InactiveTermsSendNoGradient) {
  auto net = tiny_net();
  const auto recs = tiny_set(1, 1);
  net.params.zero_grad();
  objective::LossWeights w{1, 1, 1, LossStaging{}.at(0)};
  accumulate_gradients(net, recs[0].image, recs[0].instances, 2, w);
  for (const char* head : {"heads.box.weight", "heads.class.weight", "heads.stop.weight"}) {
    for (float g : net.params.at(head).grad.values()) EXPECT_EQ(g, 0.0f) << head;
  }
  bool any = false;
  for (float g : net.params.at("decoder.mask.weight").grad.values()) any |= g != 0.0f;
  EXPECT_TRUE(any);
}

TEST(TrainStep, ZeroLearningRateKeepsWeights) {
  auto net = tiny_net();
  const auto before = net.params.entries();
  const auto recs = tiny_set(2, 2);
  Adam<float> opt(net.params, 0.0);
  train_step(net, opt, {&recs[0], &recs[1]}, 2, {});
  for (std::size_t k = 0; k < before.size(); ++k) EXPECT_EQ(net.params.entries()[k].param.value, before[k].param.value);
}

TEST(TrainStep, SmallStepDescends) {
  auto net = tiny_net();
  const auto recs = tiny_set(2, 4);
  const std::vector<const data::DatasetRecord*> batch{&recs[0], &recs[1]};
  const auto mean_loss = [&] {
    double s = 0;
    for (const auto* r : batch) s += evaluate_loss(net, r->image, curriculum_filter(r->instances, 2), 2, {}).total;
    return s / 2;
  };
  const double before = mean_loss();
  Adam<float> frozen(net.params, 0.0);
  train_step(net, frozen, batch, 2, {});
  EXPECT_EQ(mean_loss(), before);
  Adam<float> opt(net.params, 1e-4);
  train_step(net, opt, batch, 2, {});
  EXPECT_LT(mean_loss(), before);
}

TEST(TrainStep, NonFiniteLossNamesTerm) {
  auto net = tiny_net();
  net.params.at("heads.class.bias").value[0] = std::numeric_limits<float>::quiet_NaN();
  const auto recs = tiny_set(1, 5);
  Adam<float> opt(net.params, 1e-3);
  try {
    train_step(net, opt, {&recs[0]}, 2, {});
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("L_c"), std::string::npos) << e.what();
  }
}

TEST(Fit, ZeroEpochsWritesInitialCheckpointOnly) {
  seqseg::testing::TempDir tmp;
  auto net = tiny_net();
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto res = fit(net, tiny_set(4, 1), tiny_set(2, 2), cfg, {tmp.path()});
  EXPECT_TRUE(res.log.empty());
  std::vector<std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(tmp.path())) files.push_back(e.path().filename().string());
  std::sort(files.begin(), files.end());
  EXPECT_EQ(files, (std::vector<std::string>{"model.ckpt", "train_log.ndjson"}));
  const auto loaded = model::load_network(tmp.path() / "model.ckpt");
  for (std::size_t k = 0; k < net.params.size(); ++k)
    EXPECT_EQ(loaded.params.entries()[k].param.value, net.params.entries()[k].param.value);
}

TEST(Fit, LogRowsAndDeterminism) {
  seqseg::testing::TempDir a, b;
  const auto train = tiny_set(6, 1), val = tiny_set(2, 2);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 17;
  auto n1 = tiny_net(cfg.seed), n2 = tiny_net(cfg.seed);
  fit(n1, train, val, cfg, {a.path()});
  fit(n2, train, val, cfg, {b.path()});
  const auto la = read_lines(a.path() / "train_log.ndjson");
  EXPECT_EQ(la.size(), 3u);
  EXPECT_EQ(la, read_lines(b.path() / "train_log.ndjson"));
  const auto row = nlohmann::json::parse(la[2]);
  EXPECT_EQ(row.at("epoch"), 3);
  EXPECT_EQ(row.at("active_terms"), nlohmann::json({"mask", "stop", "class"}));
}

TEST(Fit, ResumeReproducesRemainingLog) {
  seqseg::testing::TempDir full, part;
  const auto train = tiny_set(6, 3), val = tiny_set(2, 4);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 3;
  cfg.seed = 8;
  cfg.checkpoint_every = 2;
  cfg.patience = 1;
  auto net = tiny_net(cfg.seed);
  const auto res = fit(net, train, val, cfg, {full.path()});
  EXPECT_TRUE(std::filesystem::exists(full.path() / "epoch_0002.ckpt"));
  EXPECT_FALSE(std::filesystem::exists(full.path() / "epoch_0004.ckpt"));

  const auto ck = model::read_checkpoint(full.path() / "epoch_0002.ckpt");
  auto resumed = model::network_from_checkpoint(ck);
  FitOptions opts{part.path()};
  opts.resume = &ck;
  const auto res2 = fit(resumed, train, val, cfg, opts);
  const auto lf = read_lines(full.path() / "train_log.ndjson");
  const auto lp = read_lines(part.path() / "train_log.ndjson");
  ASSERT_EQ(lp.size(), 2u);
  EXPECT_EQ(lp[0], lf[2]);
  EXPECT_EQ(lp[1], lf[3]);
  EXPECT_EQ(res2.state.curriculum, res.state.curriculum);
  for (std::size_t k = 0; k < net.params.size(); ++k)
    EXPECT_EQ(resumed.params.entries()[k].param.value, net.params.entries()[k].param.value);
}

TEST(Checkpoint, RoundTripAndVersionCheck) {
  seqseg::testing::TempDir tmp;
  const auto net = tiny_net(21);
  const auto path = tmp.path() / "m.ckpt";
  model::write_checkpoint(path, model::model_checkpoint(net));
  const auto back = model::load_network(path);
  EXPECT_EQ(back.decoder.hidden, 8);
  EXPECT_EQ(back.encoder.blocks, 3);
  for (std::size_t k = 0; k < net.params.size(); ++k)
    EXPECT_EQ(back.params.entries()[k].param.value, net.params.entries()[k].param.value);

  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(4);
  const std::uint32_t bogus = 99;
  f.write(reinterpret_cast<const char*>(&bogus), sizeof bogus);
  f.close();
  EXPECT_THROW(model::load_network(path), IoError);
  EXPECT_THROW(model::load_network(tmp.path() / "missing.ckpt"), IoError);
}
