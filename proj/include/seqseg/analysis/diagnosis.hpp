#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seqseg/metrics/metrics.hpp"

namespace seqseg::analysis {

using metrics::ImageResult;

enum class FPCategory { Loc = 0, Bg = 1, Dup = 2, Cls = 3, LocCls = 4 };

inline constexpr std::array<FPCategory, 5> kAllCategories{FPCategory::Loc, FPCategory::Bg, FPCategory::Dup, FPCategory::Cls,
                                                          FPCategory::LocCls};

inline std::string to_string(FPCategory c) {
  switch (c) {
    case FPCategory::Loc: return "Loc";
    case FPCategory::Bg: return "Bg";
    case FPCategory::Dup: return "Dup";
    case FPCategory::Cls: return "Cls";
    case FPCategory::LocCls: return "LocCls";
  }
  return "Bg";
}

inline constexpr double kMatchIou = 0.5;
inline constexpr double kLocalizationIou = 0.1;

struct FPHistogram {
  std::array<long, 5> counts{};  // indexed by FPCategory

  long operator[](FPCategory c) const { return counts[static_cast<int>(c)]; }
  long total() const {
    long n = 0;
    for (long c : counts) n += c;
    return n;
  }
  bool operator==(const FPHistogram&) const = default;
};

/// Category of every detection (nullopt for true positives) after greedy matching at IoU 0.5.
/// Rules, first match wins: Dup (same-class gt already claimed at IoU ≥ 0.5), Cls (other-class gt
/// at IoU ≥ 0.5), Loc (same-class gt at IoU in [0.1, 0.5)), LocCls (other-class gt at IoU in
/// [0.1, 0.5)), otherwise Bg.
inline std::vector<std::optional<FPCategory>> classify_detections(const ImageResult& img) {
  const auto ious = metrics::iou_table(img);
  const auto match = metrics::greedy_match(img, ious, kMatchIou);
  std::vector<std::optional<FPCategory>> out(img.detections.size());
  for (std::size_t d = 0; d < img.detections.size(); ++d) {
    if (match[d].gt >= 0) continue;
    double same = 0, other = 0;
    for (std::size_t g = 0; g < img.gts.size(); ++g) {
      double& best = img.gts[g].class_id == img.detections[d].class_id ? same : other;
      best = std::max(best, ious[d][g]);
    }
    if (same >= kMatchIou) {
      out[d] = FPCategory::Dup;
    } else if (other >= kMatchIou) {
      out[d] = FPCategory::Cls;
    } else if (same >= kLocalizationIou) {
      out[d] = FPCategory::Loc;
    } else if (other >= kLocalizationIou) {
      out[d] = FPCategory::LocCls;
    } else {
      out[d] = FPCategory::Bg;
    }
  }
  return out;
}

inline FPHistogram classify_false_positives(const std::vector<ImageResult>& images) {
  FPHistogram h;
  for (const auto& img : images) {
    for (const auto& c : classify_detections(img)) {
      if (c) ++h.counts[static_cast<int>(*c)];
    }
  }
  return h;
}

/// Counts over bins [0, e_0), [e_0, e_1), ..., [e_last, ∞) of a percentage.
struct Histogram {
  std::vector<double> edges;
  std::vector<long> counts;

  explicit Histogram(std::vector<double> e = {}) : edges(std::move(e)), counts(edges.size() + 1, 0) {}

  std::size_t bin(double value) const {
    std::size_t b = 0;
    while (b < edges.size() && value >= edges[b]) ++b;
    return b;
  }
  long total() const {
    long n = 0;
    for (long c : counts) n += c;
    return n;
  }
  std::string label(std::size_t b) const {
    const auto fmt = [](double v) {
      std::string s = std::to_string(v);
      s.erase(s.find_last_not_of('0') + 1);
      if (s.back() == '.') s.pop_back();
      return s;
    };
    if (b == 0) return "<" + fmt(edges[0]);
    if (b == edges.size()) return ">=" + fmt(edges.back());
    return fmt(edges[b - 1]) + "-" + fmt(edges[b]);
  }
};

/// Object size bins in percent of the image area.
inline std::vector<double> fn_size_edges() { return {0.5, 1, 3, 5, 10, 15}; }
inline std::vector<double> iou_size_edges() { return {0.5, 1, 3, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50}; }

inline double area_percent(const BinaryMask& m) {
  return 100.0 * static_cast<double>(m.area()) / static_cast<double>(m.size());
}

/// Ground truths that no true positive claims at IoU 0.5, binned by size.
inline Histogram fn_size_histogram(const std::vector<ImageResult>& images) {
  Histogram h(fn_size_edges());
  for (const auto& img : images) {
    std::vector<bool> found(img.gts.size(), false);
    for (const auto& m : metrics::greedy_match(img, kMatchIou)) {
      if (m.gt >= 0) found[m.gt] = true;
    }
    for (std::size_t g = 0; g < img.gts.size(); ++g) {
      if (!found[g]) ++h.counts[h.bin(area_percent(img.gts[g].mask))];
    }
  }
  return h;
}

/// Mean IoU of true positives per emission step; steps without a TP are absent.
inline std::map<int, double> iou_vs_timestep(const std::vector<ImageResult>& images) {
  std::map<int, std::pair<double, long>> acc;
  for (const auto& img : images) {
    const auto match = metrics::greedy_match(img, kMatchIou);
    for (std::size_t d = 0; d < img.detections.size(); ++d) {
      if (match[d].gt < 0) continue;
      auto& a = acc[img.detections[d].step];
      a.first += match[d].iou;
      ++a.second;
    }
  }
  std::map<int, double> out;
  for (const auto& [t, a] : acc) out[t] = a.first / static_cast<double>(a.second);
  return out;
}

struct SizeCurve {
  Histogram bins;                       // TP counts per bin
  std::vector<std::optional<double>> mean_iou;  // per bin, nullopt when empty
};

/// Mean IoU of true positives grouped by the size of the matched ground truth.
inline SizeCurve iou_vs_size(const std::vector<ImageResult>& images) {
  SizeCurve c{Histogram(iou_size_edges()), {}};
  std::vector<double> sums(c.bins.counts.size(), 0.0);
  for (const auto& img : images) {
    const auto match = metrics::greedy_match(img, kMatchIou);
    for (const auto& m : match) {
      if (m.gt < 0) continue;
      const std::size_t b = c.bins.bin(area_percent(img.gts[m.gt].mask));
      sums[b] += m.iou;
      ++c.bins.counts[b];
    }
  }
  for (std::size_t b = 0; b < sums.size(); ++b) {
    c.mean_iou.push_back(c.bins.counts[b] ? std::optional<double>(sums[b] / static_cast<double>(c.bins.counts[b]))
                                          : std::nullopt);
  }
  return c;
}

}  // namespace seqseg::analysis
