#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqseg/core/errors.hpp"
#include "seqseg/core/mask_ops.hpp"
#include "seqseg/core/types.hpp"

namespace seqseg::metrics {

inline void require_same_size(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("mask sizes differ: " + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                     std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

/// |a ∩ b| / |a ∪ b|, 0 when both are empty.
inline double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b);
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a.data[i] && b.data[i];
    uni += a.data[i] || b.data[i];
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// 2|a ∩ b| / (|a| + |b|), 0 when both are empty.
inline double dice(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b);
  long inter = 0, sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a.data[i] && b.data[i];
    sum += a.data[i] + b.data[i];
  }
  return sum == 0 ? 0.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(sum);
}

/// A binarized prediction with its ranking score.
struct Detection {
  BinaryMask mask;
  int class_id = 0;
  double score = 0.0;
  int step = 0;  // emission index within its sequence
};

/// Ranking score = stop score × max class probability; the class is the argmax.
template <typename T>
std::vector<Detection> to_detections(const PredictionSequence<T>& seq, double mask_threshold = kDefaultMaskThreshold) {
  std::vector<Detection> out;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const auto& p = seq[t];
    out.push_back({binarize(p.mask, mask_threshold), p.predicted_class(),
                   static_cast<double>(p.stop_score) * static_cast<double>(p.max_class_prob()), static_cast<int>(t)});
  }
  return out;
}

/// Detections of one image together with its ground truth.
struct ImageResult {
  std::vector<Detection> detections;
  std::vector<GroundTruthInstance> gts;
};

/// Outcome of greedy matching for one detection.
struct MatchInfo {
  int gt = -1;       // matched gt index, or -1 for a false positive
  double iou = 0.0;  // IoU with the matched gt
};

/// Detection indices by descending score; ties keep emission order.
inline std::vector<std::size_t> rank_order(const std::vector<Detection>& dets) {
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return order;
}

/// IoU of every detection (rows) with every gt (columns).
inline std::vector<std::vector<double>> iou_table(const ImageResult& img) {
  std::vector<std::vector<double>> t(img.detections.size(), std::vector<double>(img.gts.size()));
  for (std::size_t d = 0; d < img.detections.size(); ++d)
    for (std::size_t g = 0; g < img.gts.size(); ++g) t[d][g] = mask_iou(img.detections[d].mask, img.gts[g].mask);
  return t;
}

/// In rank order, a detection becomes a true positive by claiming the unmatched same-class gt of
/// highest IoU, provided that IoU is at least `threshold`.
inline std::vector<MatchInfo> greedy_match(const ImageResult& img, const std::vector<std::vector<double>>& ious,
                                           double threshold) {
  std::vector<MatchInfo> out(img.detections.size());
  std::vector<bool> taken(img.gts.size(), false);
  for (std::size_t d : rank_order(img.detections)) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < img.gts.size(); ++g) {
      if (taken[g] || img.gts[g].class_id != img.detections[d].class_id) continue;
      if (ious[d][g] > best_iou) {
        best_iou = ious[d][g];
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_iou >= threshold) {
      taken[best] = true;
      out[d] = {best, best_iou};
    }
  }
  return out;
}

inline std::vector<MatchInfo> greedy_match(const ImageResult& img, double threshold) {
  return greedy_match(img, iou_table(img), threshold);
}

/// Area under the all-points interpolated precision/recall curve of a ranked TP/FP list.
inline double average_precision_from_ranks(const std::vector<bool>& ranked_tp, std::size_t positives) {
  if (positives == 0) throw std::invalid_argument("average precision is undefined without positives");
  std::vector<double> recall, precision;
  double tp = 0;
  for (std::size_t i = 0; i < ranked_tp.size(); ++i) {
    tp += ranked_tp[i];
    recall.push_back(tp / static_cast<double>(positives));
    precision.push_back(tp / static_cast<double>(i + 1));
  }
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0, prev = 0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev) * precision[i];
    prev = recall[i];
  }
  return ap;
}

/// AP of one class over a dataset, or nullopt when the class has no ground truth.
inline std::optional<double> average_precision(const std::vector<ImageResult>& images, int class_id, double iou_thresh) {
  if (!(iou_thresh > 0 && iou_thresh <= 1)) throw std::invalid_argument("iou threshold must be in (0, 1]");
  struct Ranked {
    double score;
    std::size_t image;
    int step;
    bool tp;
  };
  std::vector<Ranked> ranked;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    for (const auto& g : img.gts) positives += g.class_id == class_id;
    const auto match = greedy_match(img, iou_thresh);
    for (std::size_t d = 0; d < img.detections.size(); ++d) {
      if (img.detections[d].class_id == class_id) {
        ranked.push_back({img.detections[d].score, i, img.detections[d].step, match[d].gt >= 0});
      }
    }
  }
  if (positives == 0) return std::nullopt;
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
  std::vector<bool> tp;
  for (const auto& r : ranked) tp.push_back(r.tp);
  return average_precision_from_ranks(tp, positives);
}

/// Mean over `from` of the best Dice against any mask in `to`.
inline double best_dice(const std::vector<BinaryMask>& from, const std::vector<BinaryMask>& to) {
  if (from.empty() || to.empty()) return 0.0;
  double sum = 0;
  for (const auto& a : from) {
    double best = 0;
    for (const auto& b : to) best = std::max(best, dice(a, b));
    sum += best;
  }
  return sum / static_cast<double>(from.size());
}

/// min(BD(pred, gt), BD(gt, pred)). Two empty sets score 1; exactly one empty set scores 0.
inline double symmetric_best_dice(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt) {
  if (pred.empty() && gt.empty()) return 1.0;
  return std::min(best_dice(pred, gt), best_dice(gt, pred));
}

struct CountDifference {
  double signed_mean = 0.0;
  double abs_mean = 0.0;
};

inline CountDifference difference_in_count(const std::vector<std::pair<int, int>>& predicted_vs_true) {
  CountDifference out;
  if (predicted_vs_true.empty()) return out;
  for (const auto& [p, n] : predicted_vs_true) {
    if (p < 0 || n < 0) throw std::invalid_argument("counts must be >= 0");
    out.signed_mean += p - n;
    out.abs_mean += std::abs(p - n);
  }
  out.signed_mean /= static_cast<double>(predicted_vs_true.size());
  out.abs_mean /= static_cast<double>(predicted_vs_true.size());
  return out;
}

struct EvalResult {
  std::vector<double> thresholds;
  int classes = 0;
  std::vector<std::vector<std::optional<double>>> ap;  // [threshold][class]
  std::vector<double> mean_ap;                        // per threshold, over classes with ground truth
  double sbd = 0.0;
  CountDifference dic;
  std::size_t images = 0;

  nlohmann::json to_json() const {
    nlohmann::json j{{"images", images}, {"sbd", sbd}, {"dic", {{"signed", dic.signed_mean}, {"abs", dic.abs_mean}}}};
    j["ap"] = nlohmann::json::array();
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      nlohmann::json per_class = nlohmann::json::array();
      for (const auto& v : ap[t]) per_class.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
      j["ap"].push_back({{"iou", thresholds[t]}, {"mean", mean_ap[t]}, {"per_class", per_class}});
    }
    return j;
  }

  std::string csv() const {
    std::ostringstream out;
    out << "iou,class,ap\n";
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      for (int c = 0; c < classes; ++c) {
        out << thresholds[t] << "," << c << ",";
        if (ap[t][c]) out << *ap[t][c];
        out << "\n";
      }
      out << thresholds[t] << ",mean," << mean_ap[t] << "\n";
    }
    return out.str();
  }

  std::string text() const {
    std::ostringstream out;
    out << "images " << images << "\n";
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      out << "AP@" << thresholds[t] << " mean " << mean_ap[t] << " |";
      for (int c = 0; c < classes; ++c) {
        out << " c" << c << "=";
        if (ap[t][c]) {
          out << *ap[t][c];
        } else {
          out << "n/a";
        }
      }
      out << "\n";
    }
    out << "SBD " << sbd << "\nDiC " << dic.signed_mean << " |DiC| " << dic.abs_mean << "\n";
    return out.str();
  }
};

/// AP per class and threshold, SBD and DiC averaged over images.
inline EvalResult evaluate(const std::vector<ImageResult>& images, const std::vector<double>& thresholds, int classes) {
  if (classes < 1) throw std::invalid_argument("evaluate: classes must be >= 1");
  EvalResult r;
  r.thresholds = thresholds;
  r.classes = classes;
  r.images = images.size();
  for (double thr : thresholds) {
    std::vector<std::optional<double>> row;
    double sum = 0;
    int defined = 0;
    for (int c = 0; c < classes; ++c) {
      row.push_back(average_precision(images, c, thr));
      if (row.back()) {
        sum += *row.back();
        ++defined;
      }
    }
    r.ap.push_back(row);
    r.mean_ap.push_back(defined ? sum / defined : 0.0);
  }
  std::vector<std::pair<int, int>> counts;
  double sbd = 0;
  for (const auto& img : images) {
    std::vector<BinaryMask> pm, gm;
    for (const auto& d : img.detections) pm.push_back(d.mask);
    for (const auto& g : img.gts) gm.push_back(g.mask);
    sbd += symmetric_best_dice(pm, gm);
    counts.emplace_back(static_cast<int>(pm.size()), static_cast<int>(gm.size()));
  }
  r.sbd = images.empty() ? 0.0 : sbd / static_cast<double>(images.size());
  r.dic = difference_in_count(counts);
  return r;
}

}  // namespace seqseg::metrics
