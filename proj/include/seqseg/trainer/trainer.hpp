#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqseg/core/errors.hpp"
#include "seqseg/data/shapes.hpp"
#include "seqseg/model/checkpoint.hpp"
#include "seqseg/trainer/adam.hpp"
#include "seqseg/trainer/backprop.hpp"
#include "seqseg/trainer/curriculum.hpp"

namespace seqseg::trainer {

using data::DatasetRecord;
using nlohmann::json;

/// Epoch (0-based) from which each loss term contributes.
struct LossStaging {
  int mask = 0;
  int stop = 1;
  int cls = 2;
  int box = 3;

  objective::ActiveTerms at(int epoch) const { return {epoch >= mask, epoch >= box, epoch >= cls, epoch >= stop}; }
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 8;
  int epochs = 20;
  std::uint64_t seed = 0;
  LossStaging staging;
  double alpha = 1.0;
  double lambda = 1.0;
  double gamma = 1.0;
  double stop_threshold = 0.5;  // validation inference
  int max_steps = 10;           // validation inference
  int checkpoint_every = 0;     // 0: final checkpoint only
  int curriculum_start = 2;
  int curriculum_max = 0;  // 0: uncapped
  int patience = 5;
  double plateau_eps = 1e-3;

  void validate() const {
    if (!(learning_rate >= 0)) throw ConfigError("learning-rate must be >= 0");
    if (batch_size < 1) throw ConfigError("batch-size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (alpha < 0 || lambda < 0 || gamma < 0) throw ConfigError("loss weights must be >= 0");
    if (!(stop_threshold > 0 && stop_threshold < 1)) throw ConfigError("stop-threshold must be in (0, 1)");
    if (max_steps < 1) throw ConfigError("max-steps must be >= 1");
    if (checkpoint_every < 0) throw ConfigError("checkpoint-every must be >= 0");
    if (curriculum_start < 2) throw ConfigError("curriculum-start must be >= 2");
    if (curriculum_max != 0 && curriculum_max < curriculum_start) {
      throw ConfigError("curriculum-max must be 0 or >= curriculum-start");
    }
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (!(plateau_eps >= 0 && plateau_eps < 1)) throw ConfigError("plateau-eps must be in [0, 1)");
    if (staging.mask < 0 || staging.stop < 0 || staging.cls < 0 || staging.box < 0) {
      throw ConfigError("stage epochs must be >= 0");
    }
  }

  objective::LossWeights weights(int epoch) const { return {alpha, lambda, gamma, staging.at(epoch)}; }
  objective::LossWeights all_terms() const { return {alpha, lambda, gamma, {}}; }
};

/// Mean loss terms over a set of images.
struct LossMeans {
  double l_m = 0, l_b = 0, l_c = 0, l_s = 0, total = 0;
  std::size_t count = 0;

  void add(const objective::LossBreakdown& b) {
    l_m += b.l_m;
    l_b += b.l_b;
    l_c += b.l_c;
    l_s += b.l_s;
    total += b.total;
    ++count;
  }
  LossMeans mean() const {
    if (count == 0) return *this;
    const double n = static_cast<double>(count);
    return {l_m / n, l_b / n, l_c / n, l_s / n, total / n, count};
  }
  json to_json() const { return {{"l_m", l_m}, {"l_b", l_b}, {"l_c", l_c}, {"l_s", l_s}, {"total", total}}; }
};

inline json active_list(const objective::ActiveTerms& a) {
  json out = json::array();
  if (a.mask) out.push_back("mask");
  if (a.stop) out.push_back("stop");
  if (a.cls) out.push_back("class");
  if (a.box) out.push_back("box");
  return out;
}

inline void check_finite(const objective::LossBreakdown& b, std::size_t image) {
  const std::pair<const char*, double> terms[] = {{"L_m", b.l_m}, {"L_b", b.l_b}, {"L_c", b.l_c}, {"L_s", b.l_s}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) {
      throw TrainingError("non-finite loss term " + std::string(name) + " (" + std::to_string(v) +
                          ") on batch image " + std::to_string(image));
    }
  }
}

/// One optimizer step on the mean loss of `batch`, with targets reduced to the curriculum level
/// and the decoder unrolled `level` times.
inline LossMeans train_step(model::Network<float>& net, Adam<float>& opt, const std::vector<const DatasetRecord*>& batch,
                            int level, const objective::LossWeights& weights) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  net.params.zero_grad();
  LossMeans sums;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto targets = curriculum_filter(batch[i]->instances, level);
    const auto b = accumulate_gradients(net, batch[i]->image, targets, level, weights, scale);
    check_finite(b, i);
    sums.add(b);
  }
  opt.step(net.params);
  return sums.mean();
}

/// Mean loss over `records` at the given level without gradients.
inline LossMeans evaluate_level(const model::Network<float>& net, const std::vector<DatasetRecord>& records, int level,
                                const objective::LossWeights& weights) {
  LossMeans sums;
  for (const auto& r : records) {
    sums.add(evaluate_loss(net, r.image, curriculum_filter(r.instances, level), level, weights));
  }
  return sums.mean();
}

struct TrainerState {
  int epochs_completed = 0;
  CurriculumState curriculum;
  Adam<float> adam;
};

inline json to_json(const CurriculumState& s) {
  json best = std::isfinite(s.best_val) ? json(s.best_val) : json(nullptr);
  return {{"current_max_objects", s.current_max_objects},
          {"patience", s.patience},
          {"plateau_eps", s.plateau_eps},
          {"best_val", best},
          {"epochs_since_best", s.epochs_since_best},
          {"max_objects_cap", s.max_objects_cap}};
}

inline CurriculumState curriculum_from_json(const json& j) {
  CurriculumState s;
  s.current_max_objects = j.at("current_max_objects").get<int>();
  s.patience = j.at("patience").get<int>();
  s.plateau_eps = j.at("plateau_eps").get<double>();
  s.best_val = j.at("best_val").is_null() ? std::numeric_limits<double>::infinity() : j.at("best_val").get<double>();
  s.epochs_since_best = j.at("epochs_since_best").get<int>();
  s.max_objects_cap = j.at("max_objects_cap").get<int>();
  return s;
}

inline model::Checkpoint training_checkpoint(const model::Network<float>& net, const TrainerState& st,
                                             const json& config) {
  model::Checkpoint ck = model::model_checkpoint(net);
  ck.meta["trainer"] = {{"epochs_completed", st.epochs_completed},
                        {"curriculum", to_json(st.curriculum)},
                        {"adam_steps", st.adam.steps()},
                        {"config", config}};
  const auto& entries = net.params.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    ck.tensors.push_back({"adam.m/" + entries[k].name, st.adam.first_moments()[k]});
    ck.tensors.push_back({"adam.v/" + entries[k].name, st.adam.second_moments()[k]});
  }
  return ck;
}

/// Restores optimizer and curriculum state saved by `training_checkpoint`.
inline TrainerState trainer_state_from_checkpoint(const model::Checkpoint& ck, const model::Network<float>& net,
                                                  double learning_rate) {
  TrainerState st;
  st.adam = Adam<float>(net.params, learning_rate);
  try {
    const json& t = ck.meta.at("trainer");
    st.epochs_completed = t.at("epochs_completed").get<int>();
    st.curriculum = curriculum_from_json(t.at("curriculum"));
    st.adam.set_steps(t.at("adam_steps").get<long>());
  } catch (const json::exception& e) {
    throw IoError("checkpoint", std::string("no trainer state (") + e.what() + ")");
  }
  const auto& entries = net.params.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto* m = ck.find("adam.m/" + entries[k].name);
    const auto* v = ck.find("adam.v/" + entries[k].name);
    if (!m || !v) throw IoError("checkpoint", "missing optimizer moments for " + entries[k].name);
    st.adam.first_moments()[k] = *m;
    st.adam.second_moments()[k] = *v;
  }
  return st;
}

/// Per-epoch visiting order of the training set, a pure function of (seed, epoch).
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = data::sample_rng(seed ^ 0x5eed0f0dULL, static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

/// Mean absolute difference between predicted and true instance counts.
inline double count_error(const model::Network<float>& net, const std::vector<DatasetRecord>& records,
                          double stop_threshold, int max_steps) {
  if (records.empty()) return 0.0;
  double sum = 0;
  for (const auto& r : records) {
    const auto seq = model::infer(net, r.image, stop_threshold, max_steps);
    sum += std::abs(static_cast<double>(seq.size()) - static_cast<double>(r.instances.size()));
  }
  return sum / static_cast<double>(records.size());
}

struct FitOptions {
  std::filesystem::path out_dir;
  json config_snapshot = json::object();      // stored in checkpoints
  const model::Checkpoint* resume = nullptr;  // continue from a training checkpoint
  std::function<void(const json&)> on_epoch = {};  // progress hook
};

struct FitResult {
  std::vector<json> log;
  TrainerState state;
  std::filesystem::path checkpoint;
};

inline std::string epoch_checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04d.ckpt", epoch);
  return buf;
}

/// Runs `cfg.epochs` epochs (counting those already in a resumed checkpoint). Appends one JSON line
/// per epoch to out_dir/train_log.ndjson and always writes out_dir/model.ckpt at the end.
inline FitResult fit(model::Network<float>& net, const std::vector<DatasetRecord>& train,
                     const std::vector<DatasetRecord>& val, const TrainConfig& cfg, const FitOptions& opts) {
  cfg.validate();
  if (train.empty()) throw TrainingError("training set is empty");
  std::filesystem::create_directories(opts.out_dir);

  FitResult result;
  TrainerState& st = result.state;
  if (opts.resume) {
    st = trainer_state_from_checkpoint(*opts.resume, net, cfg.learning_rate);
  } else {
    st.adam = Adam<float>(net.params, cfg.learning_rate);
    st.curriculum.current_max_objects = cfg.curriculum_start;
    st.curriculum.patience = cfg.patience;
    st.curriculum.plateau_eps = cfg.plateau_eps;
    if (cfg.curriculum_max > 0) st.curriculum.max_objects_cap = cfg.curriculum_max;
  }
  st.adam.lr = cfg.learning_rate;

  const std::filesystem::path log_path = opts.out_dir / "train_log.ndjson";
  std::ofstream log(log_path, opts.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError(log_path.string(), "cannot write training log");

  for (int epoch = st.epochs_completed; epoch < cfg.epochs; ++epoch) {
    const int level = st.curriculum.current_max_objects;
    const auto weights = cfg.weights(epoch);
    const auto order = epoch_order(train.size(), cfg.seed, epoch);
    LossMeans train_sum;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const DatasetRecord*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        batch.push_back(&train[order[i]]);
      }
      const LossMeans b = train_step(net, st.adam, batch, level, weights);
      train_sum.l_m += b.l_m * b.count;
      train_sum.l_b += b.l_b * b.count;
      train_sum.l_c += b.l_c * b.count;
      train_sum.l_s += b.l_s * b.count;
      train_sum.total += b.total * b.count;
      train_sum.count += b.count;
    }

    json row{{"epoch", epoch + 1}, {"curriculum_level", level}, {"active_terms", active_list(weights.active)}};
    row["train"] = train_sum.mean().to_json();
    bool advanced = false;
    if (!val.empty()) {
      // Plateaus are judged on the full weighted loss so that staging does not look like regress.
      const LossMeans v = evaluate_level(net, val, level, cfg.all_terms());
      row["val"] = v.to_json();
      row["val_count_error"] = count_error(net, val, cfg.stop_threshold, cfg.max_steps);
      const auto pr = plateau_check(st.curriculum, v.total);
      st.curriculum = pr.state;
      advanced = pr.advanced;
      if (advanced) {
        // Compare later epochs against the loss of the harder task.
        st.curriculum.best_val = evaluate_level(net, val, st.curriculum.current_max_objects, cfg.all_terms()).total;
      }
    }
    row["advanced"] = advanced;
    st.epochs_completed = epoch + 1;
    log << row.dump() << "\n";
    log.flush();
    result.log.push_back(row);
    if (opts.on_epoch) opts.on_epoch(row);

    if (cfg.checkpoint_every > 0 && st.epochs_completed % cfg.checkpoint_every == 0 &&
        st.epochs_completed < cfg.epochs) {
      model::write_checkpoint(opts.out_dir / epoch_checkpoint_name(st.epochs_completed),
                              training_checkpoint(net, st, opts.config_snapshot));
    }
  }
  result.checkpoint = opts.out_dir / "model.ckpt";
  model::write_checkpoint(result.checkpoint, training_checkpoint(net, st, opts.config_snapshot));
  return result;
}

}  // namespace seqseg::trainer
