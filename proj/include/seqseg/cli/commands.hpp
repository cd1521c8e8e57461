#pragma once

#include <cstdio>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "seqseg/analysis/plots.hpp"
#include "seqseg/analysis/report.hpp"
#include "seqseg/cli/options.hpp"
#include "seqseg/core/parallel.hpp"
#include "seqseg/data/dataset_io.hpp"
#include "seqseg/data/png.hpp"
#include "seqseg/metrics/metrics.hpp"
#include "seqseg/model/checkpoint.hpp"
#include "seqseg/trainer/trainer.hpp"

namespace seqseg::cli {

namespace fs = std::filesystem;

inline fs::path prepare_out_dir(const RunConfig& rc) {
  const fs::path out = rc.text("out-dir");
  fs::create_directories(out);
  data::write_text(out / "config.json", rc.snapshot().dump(2) + "\n");
  return out;
}

inline std::vector<data::DatasetRecord> load_split_or_all(const fs::path& dir, const std::string& split) {
  return split.empty() ? data::load_dataset(dir) : data::load_split(dir, split);
}

inline model::Network<float> require_network(const RunConfig& rc) {
  const std::string path = rc.text("checkpoint");
  if (path.empty()) throw ConfigError("missing required option --checkpoint");
  return model::load_network(path);
}

inline void check_inference_options(const RunConfig& rc) {
  const double stop = rc.real("stop-threshold");
  if (!(stop > 0 && stop < 1)) throw ConfigError("--stop-threshold must be in (0, 1)");
  if (rc.integer("max-steps") < 1) throw ConfigError("--max-steps must be >= 1");
  const double mask = rc.real("mask-threshold");
  if (!(mask > 0 && mask < 1)) throw ConfigError("--mask-threshold must be in (0, 1)");
}

/// Predictions for every record, in record order.
inline std::vector<metrics::ImageResult> predict_all(const model::Network<float>& net,
                                                     const std::vector<data::DatasetRecord>& records,
                                                     const RunConfig& rc) {
  const double stop = rc.real("stop-threshold"), mask = rc.real("mask-threshold");
  const int steps = rc.integer("max-steps");
  return parallel_map<metrics::ImageResult>(records.size(), [&](std::size_t i) {
    const auto seq = model::infer(net, records[i].image, stop, steps);
    return metrics::ImageResult{metrics::to_detections(seq, mask), records[i].instances};
  });
}

inline void cmd_gen_data(const RunConfig& rc, std::ostream& out) {
  data::ShapesSpec spec;
  spec.height = rc.integer("height");
  spec.width = rc.integer("width");
  spec.classes = rc.integer("classes");
  spec.min_objects = rc.integer("min-objects");
  spec.max_objects = rc.integer("max-objects");
  spec.min_size = rc.real("min-size");
  spec.max_size = rc.real("max-size");
  spec.max_overlap = rc.real("max-overlap");
  spec.seed = rc.seed("seed");
  spec.validate();
  const int counts[3] = {rc.integer("images"), rc.integer("val-images"), rc.integer("test-images")};
  for (int c : counts) {
    if (c < 0) throw ConfigError("image counts must be >= 0");
  }
  const std::size_t total = static_cast<std::size_t>(counts[0]) + counts[1] + counts[2];
  if (total == 0) throw ConfigError("nothing to generate: all image counts are 0");

  const fs::path dir = prepare_out_dir(rc);
  const auto records =
      parallel_map<data::DatasetRecord>(total, [&](std::size_t i) { return data::generate_sample(spec, i); });
  std::map<std::string, std::vector<std::size_t>> splits;
  const char* names[3] = {"train", "val", "test"};
  std::size_t next = 0;
  for (int s = 0; s < 3; ++s) {
    if (counts[s] == 0) continue;
    auto& ids = splits[names[s]];
    for (int k = 0; k < counts[s]; ++k) ids.push_back(next++);
  }
  const json info{{"generator", "shapes"}, {"classes", spec.classes}, {"height", spec.height},
                  {"width", spec.width},    {"seed", spec.seed}};
  data::save_dataset(dir, records, splits, info);
  out << "wrote " << total << " images to " << dir.string() << "\n";
}

inline void cmd_train(const RunConfig& rc, std::ostream& out) {
  model::EncoderConfig enc;
  enc.blocks = rc.integer("encoder-blocks");
  enc.base_channels = rc.integer("base-channels");
  enc.channel_growth = rc.integer("channel-growth");
  model::DecoderConfig dec;
  dec.num_layers = rc.integer("decoder-layers");
  dec.hidden = rc.integer("hidden");
  dec.skip = model::parse_skip_mode(rc.text("skip-mode"));
  dec.classes = rc.integer("classes");
  enc.validate();
  dec.validate(enc);

  trainer::TrainConfig cfg;
  cfg.learning_rate = rc.real("learning-rate");
  cfg.batch_size = rc.integer("batch-size");
  cfg.epochs = rc.integer("epochs");
  cfg.seed = rc.seed("seed");
  cfg.staging.stop = rc.integer("stage-stop");
  cfg.staging.cls = rc.integer("stage-class");
  cfg.staging.box = rc.integer("stage-box");
  cfg.alpha = rc.real("alpha");
  cfg.lambda = rc.real("lambda");
  cfg.gamma = rc.real("gamma");
  cfg.stop_threshold = rc.real("stop-threshold");
  cfg.max_steps = rc.integer("max-steps");
  cfg.checkpoint_every = rc.integer("checkpoint-every");
  cfg.curriculum_start = rc.integer("curriculum-start");
  cfg.curriculum_max = rc.integer("curriculum-max");
  cfg.patience = rc.integer("patience");
  cfg.plateau_eps = rc.real("plateau-eps");
  cfg.validate();

  const fs::path data_dir = rc.text("data-dir");
  const auto train = data::load_split(data_dir, rc.text("train-split"));
  const std::string val_split = rc.text("val-split");
  const auto val = val_split.empty() ? std::vector<data::DatasetRecord>{} : data::load_split(data_dir, val_split);
  for (const auto* set : {&train, &val}) {
    for (const auto& r : *set) {
      for (const auto& gt : r.instances) {
        if (gt.class_id < 0 || gt.class_id >= dec.classes) {
          throw ConfigError("dataset holds class id " + std::to_string(gt.class_id) + " but --classes is " +
                            std::to_string(dec.classes));
        }
      }
    }
  }

  std::optional<model::Checkpoint> resume;
  model::Network<float> net;
  if (const std::string path = rc.text("resume"); !path.empty()) {
    resume = model::read_checkpoint(path);
    net = model::network_from_checkpoint(*resume, path);
  } else {
    net = model::Network<float>::create(enc, dec, cfg.seed);
  }

  const fs::path dir = prepare_out_dir(rc);
  trainer::FitOptions opts;
  opts.out_dir = dir;
  opts.config_snapshot = rc.snapshot();
  opts.resume = resume ? &*resume : nullptr;
  opts.on_epoch = [&](const json& row) {
    out << "epoch " << row.at("epoch") << " level " << row.at("curriculum_level") << " train "
        << row.at("train").at("total");
    if (row.contains("val")) out << " val " << row.at("val").at("total") << " count_err " << row.at("val_count_error");
    out << (row.at("advanced").get<bool>() ? " advanced" : "") << "\n";
    out.flush();
  };
  const auto result = trainer::fit(net, train, val, cfg, opts);
  out << "checkpoint " << result.checkpoint.string() << "\n";
}

inline void cmd_eval(const RunConfig& rc, std::ostream& out) {
  check_inference_options(rc);
  const auto thresholds = rc.reals("iou-thresholds");
  for (double t : thresholds) {
    if (!(t > 0 && t <= 1)) throw ConfigError("--iou-thresholds must lie in (0, 1]");
  }
  const fs::path data_dir = rc.text("data-dir");
  const auto records = load_split_or_all(data_dir, rc.text("split"));

  std::vector<metrics::ImageResult> results;
  int classes = 1;
  if (rc.flag("oracle-predictions")) {
    for (const auto& r : records) {
      metrics::ImageResult img{{}, r.instances};
      for (std::size_t k = 0; k < r.instances.size(); ++k) {
        img.detections.push_back({r.instances[k].mask, r.instances[k].class_id, 1.0, static_cast<int>(k)});
        classes = std::max(classes, r.instances[k].class_id + 1);
      }
      results.push_back(std::move(img));
    }
  } else {
    const auto net = require_network(rc);
    classes = net.decoder.classes;
    results = predict_all(net, records, rc);
  }
  const auto report = metrics::evaluate(results, thresholds, classes);
  const fs::path dir = prepare_out_dir(rc);
  data::write_text(dir / "eval.json", report.to_json().dump(2) + "\n");
  data::write_text(dir / "eval.csv", report.csv());
  data::write_text(dir / "eval.txt", report.text());
  out << report.text();
}

inline void cmd_predict(const RunConfig& rc, std::ostream& out) {
  check_inference_options(rc);
  const auto net = require_network(rc);
  const ImageSample image = data::to_image(data::read_png(rc.text("image"), 3));
  const auto seq = model::infer(net, image, rc.real("stop-threshold"), rc.integer("max-steps"));

  const fs::path dir = prepare_out_dir(rc);
  json steps = json::array();
  std::vector<BinaryMask> masks;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const auto& p = seq[t];
    masks.push_back(binarize(p.mask, rc.real("mask-threshold")));
    char name[32];
    std::snprintf(name, sizeof name, "step_%02zu.png", t + 1);
    data::write_mask_png((dir / name).string(), masks.back());
    steps.push_back({{"step", t + 1},
                     {"mask", name},
                     {"class_id", p.predicted_class()},
                     {"class_probs", p.class_probs},
                     {"stop_score", p.stop_score},
                     {"box", p.box},
                     {"area", masks.back().area()}});
  }
  data::write_png((dir / "overlay.png").string(), analysis::numbered_overlay(image, masks));
  data::write_text(dir / "predictions.json", json{{"image", rc.text("image")}, {"steps", steps}}.dump(2) + "\n");
  out << seq.size() << " predictions written to " << dir.string() << "\n";
}

inline void cmd_analyze(const RunConfig& rc, std::ostream& out) {
  check_inference_options(rc);
  if (rc.integer("overlays") < 0 || rc.integer("min-pair-count") < 1) {
    throw ConfigError("--overlays must be >= 0 and --min-pair-count >= 1");
  }
  const double axis = rc.real("axis-threshold");
  if (!(axis >= 0 && axis < 1)) throw ConfigError("--axis-threshold must be in [0, 1)");
  const auto trained = require_network(rc);
  const auto untrained = model::Network<float>::create(trained.encoder, trained.decoder, rc.seed("seed"));
  const auto records = load_split_or_all(rc.text("data-dir"), rc.text("split"));
  const auto results = predict_all(trained, records, rc);

  auto report = analysis::build_report(results, axis, rc.integer("min-pair-count"));
  std::vector<ImageSample> images;
  std::vector<std::vector<BinaryMask>> masks;
  for (std::size_t i = 0; i < records.size(); ++i) {
    images.push_back(records[i].image);
    masks.emplace_back();
    for (const auto& d : results[i].detections) masks.back().push_back(d.mask);
  }
  analysis::add_activation_study(report, images, masks, untrained, trained);

  const fs::path dir = prepare_out_dir(rc);
  data::write_text(dir / "analysis.json", report.to_json().dump(2) + "\n");
  data::write_text(dir / "analysis.txt", report.text());

  std::vector<double> tau, fp, fn, by_step;
  for (auto s : analysis::kAllStrategies) tau.push_back(report.strategy_tau.count(s) ? report.strategy_tau.at(s) : 0.0);
  for (auto c : analysis::kAllCategories) fp.push_back(static_cast<double>(report.fp[c]));
  for (long c : report.fn.counts) fn.push_back(static_cast<double>(c));
  for (const auto& [t, v] : report.iou_by_step) by_step.push_back(v);
  data::write_png((dir / "strategy_tau.png").string(), analysis::bar_chart(tau));
  data::write_png((dir / "false_positives.png").string(), analysis::bar_chart(fp));
  data::write_png((dir / "false_negative_sizes.png").string(), analysis::bar_chart(fn));
  data::write_png((dir / "iou_by_step.png").string(), analysis::bar_chart(by_step));
  data::write_png((dir / "activation_tau_before.png").string(), analysis::bar_chart(report.activation_before));
  data::write_png((dir / "activation_tau_after.png").string(), analysis::bar_chart(report.activation_after));
  const std::size_t overlays = std::min<std::size_t>(records.size(), rc.integer("overlays"));
  for (std::size_t i = 0; i < overlays; ++i) {
    data::write_png((dir / ("overlay_" + data::record_id(i) + ".png")).string(),
                    analysis::numbered_overlay(images[i], masks[i]));
  }
  out << report.text();
}

}  // namespace seqseg::cli
