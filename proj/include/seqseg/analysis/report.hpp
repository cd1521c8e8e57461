#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqseg/analysis/diagnosis.hpp"
#include "seqseg/analysis/ordering.hpp"
#include "seqseg/model/network.hpp"

namespace seqseg::analysis {

using nlohmann::json;

struct AnalysisReport {
  std::map<SortStrategy, double> strategy_tau;  // mean over images with >= 2 non-empty predictions
  long ordered_images = 0;
  std::map<ClassPair, PairDirections> pairs;
  FPHistogram fp;
  Histogram fn{fn_size_edges()};
  std::map<int, double> iou_by_step;
  SizeCurve iou_by_size{Histogram(iou_size_edges()), {}};
  std::vector<double> activation_before;  // mean τ per encoder feature f_i, untrained weights
  std::vector<double> activation_after;   // same with trained weights
  long activation_images = 0;

  json to_json() const {
    json j;
    j["strategy_tau"] = json::object();
    for (const auto& [s, t] : strategy_tau) j["strategy_tau"][to_string(s)] = t;
    j["ordered_images"] = ordered_images;
    j["pairs"] = json::array();
    for (const auto& [key, d] : pairs) {
      json counts = json::object();
      for (SortStrategy s : kAllStrategies) counts[to_string(s)] = d.counts.count(s) ? d.counts.at(s) : 0;
      j["pairs"].push_back({{"first_class", key.first}, {"second_class", key.second}, {"occurrences", d.occurrences},
                            {"directions", counts}});
    }
    j["false_positives"] = json::object();
    for (FPCategory c : kAllCategories) j["false_positives"][to_string(c)] = fp[c];
    j["fn_size_histogram"] = json::array();
    for (std::size_t b = 0; b < fn.counts.size(); ++b) j["fn_size_histogram"].push_back({{"bin", fn.label(b)}, {"count", fn.counts[b]}});
    j["iou_vs_timestep"] = json::array();
    for (const auto& [t, v] : iou_by_step) j["iou_vs_timestep"].push_back({{"step", t}, {"mean_iou", v}});
    j["iou_vs_size"] = json::array();
    for (std::size_t b = 0; b < iou_by_size.mean_iou.size(); ++b) {
      const auto& m = iou_by_size.mean_iou[b];
      j["iou_vs_size"].push_back({{"bin", iou_by_size.bins.label(b)},
                                  {"count", iou_by_size.bins.counts[b]},
                                  {"mean_iou", m ? json(*m) : json(nullptr)}});
    }
    j["activation_tau"] = {{"before", activation_before}, {"after", activation_after}, {"images", activation_images}};
    return j;
  }

  std::string text() const {
    std::ostringstream out;
    out << "ordering (mean tau over " << ordered_images << " images)\n";
    for (const auto& [s, t] : strategy_tau) out << "  " << to_string(s) << " " << t << "\n";
    out << "false positives";
    for (FPCategory c : kAllCategories) out << " " << to_string(c) << "=" << fp[c];
    out << "\nfalse negatives by size (% of image)";
    for (std::size_t b = 0; b < fn.counts.size(); ++b) out << " " << fn.label(b) << ":" << fn.counts[b];
    out << "\nmean IoU by step";
    for (const auto& [t, v] : iou_by_step) out << " " << t << ":" << v;
    out << "\nactivation tau per encoder feature (before -> after)\n";
    for (std::size_t i = 0; i < activation_after.size(); ++i) {
      out << "  f" << i << " " << activation_before[i] << " -> " << activation_after[i] << "\n";
    }
    out << "class pairs reported: " << pairs.size() << "\n";
    return out.str();
  }
};

/// Ordering and error statistics over evaluated images.
inline AnalysisReport build_report(const std::vector<ImageResult>& images, double axis_threshold = 0.15,
                                   long min_pair_occurrences = 20) {
  AnalysisReport r;
  std::vector<std::vector<metrics::Detection>> sequences;
  for (const auto& img : images) {
    sequences.push_back(img.detections);
    std::vector<BinaryMask> masks;
    for (const auto& d : img.detections) masks.push_back(d.mask);
    if (nonempty(masks).size() < 2) continue;
    ++r.ordered_images;
    for (SortStrategy s : kAllStrategies) r.strategy_tau[s] += strategy_correlation(masks, s);
  }
  for (auto& [s, t] : r.strategy_tau) t /= static_cast<double>(r.ordered_images);
  r.pairs = pair_direction_stats(sequences, axis_threshold, min_pair_occurrences);
  r.fp = classify_false_positives(images);
  r.fn = fn_size_histogram(images);
  r.iou_by_step = iou_vs_timestep(images);
  r.iou_by_size = iou_vs_size(images);
  return r;
}

/// Mean activation-order τ per encoder feature for an untrained and a trained encoder.
inline void add_activation_study(AnalysisReport& r, const std::vector<ImageSample>& images,
                                 const std::vector<std::vector<BinaryMask>>& masks, const model::Network<float>& before,
                                 const model::Network<float>& after) {
  const int blocks = after.encoder.blocks;
  r.activation_before.assign(blocks, 0.0);
  r.activation_after.assign(blocks, 0.0);
  r.activation_images = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (nonempty(masks[i]).size() < 2) continue;
    const auto fb = model::encode(images[i], before.encoder, before.params);
    const auto fa = model::encode(images[i], after.encoder, after.params);
    for (int b = 0; b < blocks; ++b) {
      r.activation_before[b] += activation_order_correlation(fb[b], masks[i]);
      r.activation_after[b] += activation_order_correlation(fa[b], masks[i]);
    }
    ++r.activation_images;
  }
  if (r.activation_images == 0) return;
  for (int b = 0; b < blocks; ++b) {
    r.activation_before[b] /= static_cast<double>(r.activation_images);
    r.activation_after[b] /= static_cast<double>(r.activation_images);
  }
}

}  // namespace seqseg::analysis
