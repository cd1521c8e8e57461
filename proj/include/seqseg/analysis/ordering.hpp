#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seqseg/core/mask_ops.hpp"
#include "seqseg/core/resample.hpp"
#include "seqseg/core/types.hpp"
#include "seqseg/metrics/metrics.hpp"

namespace seqseg::analysis {

namespace detail {

// Counts pairs i < j with v[i] > v[j]; sorts v.
inline long long count_inversions(std::vector<int>& v, std::vector<int>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  long long n = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      n += static_cast<long long>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
  return n;
}

}  // namespace detail

/// (P - Q) / (N(N-1)/2) between two orderings of the same N distinct items, in O(N log N).
inline double kendall_tau(const std::vector<int>& original, const std::vector<int>& permuted) {
  const std::size_t n = original.size();
  if (n < 2) throw std::invalid_argument("kendall_tau: need at least 2 items");
  if (permuted.size() != n) throw std::invalid_argument("kendall_tau: orders differ in length");
  std::unordered_map<int, int> pos;
  for (std::size_t i = 0; i < n; ++i) {
    if (!pos.emplace(permuted[i], static_cast<int>(i)).second) throw std::invalid_argument("kendall_tau: repeated item");
  }
  std::vector<int> seq(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto it = pos.find(original[i]);
    if (it == pos.end()) throw std::invalid_argument("kendall_tau: orders hold different items");
    seq[i] = it->second;
  }
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  const double q = static_cast<double>(detail::count_inversions(seq, buf, 0, n));
  return (pairs - 2.0 * q) / pairs;
}

enum class SortStrategy { r2l, l2r, b2t, t2b, l2s, s2l };

inline constexpr std::array<SortStrategy, 6> kAllStrategies{SortStrategy::r2l, SortStrategy::l2r, SortStrategy::b2t,
                                                            SortStrategy::t2b, SortStrategy::l2s, SortStrategy::s2l};

inline std::string to_string(SortStrategy s) {
  switch (s) {
    case SortStrategy::r2l: return "r2l";
    case SortStrategy::l2r: return "l2r";
    case SortStrategy::b2t: return "b2t";
    case SortStrategy::t2b: return "t2b";
    case SortStrategy::l2s: return "l2s";
    case SortStrategy::s2l: return "s2l";
  }
  return "r2l";
}

inline SortStrategy reverse(SortStrategy s) {
  switch (s) {
    case SortStrategy::r2l: return SortStrategy::l2r;
    case SortStrategy::l2r: return SortStrategy::r2l;
    case SortStrategy::b2t: return SortStrategy::t2b;
    case SortStrategy::t2b: return SortStrategy::b2t;
    case SortStrategy::l2s: return SortStrategy::s2l;
    case SortStrategy::s2l: return SortStrategy::l2s;
  }
  return s;
}

/// Sort key, larger first: r2l = column of the center of mass, b2t = row, l2s = area.
inline double strategy_key(const BinaryMask& m, SortStrategy s) {
  const auto [row, col] = center_of_mass(m);
  switch (s) {
    case SortStrategy::r2l: return col;
    case SortStrategy::l2r: return -col;
    case SortStrategy::b2t: return row;
    case SortStrategy::t2b: return -row;
    case SortStrategy::l2s: return static_cast<double>(m.area());
    case SortStrategy::s2l: return -static_cast<double>(m.area());
  }
  return 0.0;
}

/// Indices sorted by descending key; ties keep emission order.
inline std::vector<int> descending_order(const std::vector<double>& keys) {
  std::vector<int> order(keys.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return keys[a] > keys[b]; });
  return order;
}

inline std::vector<int> strategy_order(const std::vector<BinaryMask>& masks, SortStrategy s) {
  std::vector<double> keys;
  for (const auto& m : masks) keys.push_back(strategy_key(m, s));
  return descending_order(keys);
}

inline std::vector<BinaryMask> nonempty(std::vector<BinaryMask> masks) {
  masks.erase(std::remove_if(masks.begin(), masks.end(), [](const BinaryMask& m) { return !m.any(); }), masks.end());
  return masks;
}

/// τ between emission order and the strategy order of the non-empty masks.
inline double strategy_correlation(const std::vector<BinaryMask>& emitted, SortStrategy s) {
  const auto masks = nonempty(emitted);
  if (masks.size() < 2) throw std::invalid_argument("strategy_correlation: need at least 2 non-empty masks");
  std::vector<int> identity(masks.size());
  std::iota(identity.begin(), identity.end(), 0);
  return kendall_tau(identity, strategy_order(masks, s));
}

template <typename T>
double strategy_correlation(const PredictionSequence<T>& seq, SortStrategy s,
                            double mask_threshold = kDefaultMaskThreshold) {
  std::vector<BinaryMask> masks;
  for (const auto& p : seq.steps) masks.push_back(binarize(p.mask, mask_threshold));
  return strategy_correlation(masks, s);
}

/// How often consecutive predictions of an ordered class pair move in each direction.
struct PairDirections {
  long occurrences = 0;
  std::map<SortStrategy, long> counts;
};

using ClassPair = std::pair<int, int>;

/// Consecutive detections (t, t+1) vote r2l/l2r when the column of the center moves by more
/// than `axis_threshold`·W, b2t/t2b likewise for rows, and l2s/s2l when the area changes by
/// more than `axis_threshold` of the image area. Pairs seen fewer than `min_occurrences` times are dropped.
inline std::map<ClassPair, PairDirections> pair_direction_stats(const std::vector<std::vector<metrics::Detection>>& sequences,
                                                                double axis_threshold = 0.15, long min_occurrences = 20) {
  std::map<ClassPair, PairDirections> stats;
  for (const auto& seq : sequences) {
    for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
      const auto& a = seq[t];
      const auto& b = seq[t + 1];
      if (!a.mask.any() || !b.mask.any()) continue;
      auto& entry = stats[{a.class_id, b.class_id}];
      ++entry.occurrences;
      const auto [ra, ca] = center_of_mass(a.mask);
      const auto [rb, cb] = center_of_mass(b.mask);
      const double h = a.mask.height, w = a.mask.width;
      const double dcol = cb - ca, drow = rb - ra;
      const double darea = static_cast<double>(b.mask.area() - a.mask.area());
      if (std::abs(dcol) > axis_threshold * w) ++entry.counts[dcol < 0 ? SortStrategy::r2l : SortStrategy::l2r];
      if (std::abs(drow) > axis_threshold * h) ++entry.counts[drow < 0 ? SortStrategy::b2t : SortStrategy::t2b];
      if (std::abs(darea) > axis_threshold * h * w) ++entry.counts[darea < 0 ? SortStrategy::l2s : SortStrategy::s2l];
    }
  }
  for (auto it = stats.begin(); it != stats.end();) {
    it = it->second.occurrences < min_occurrences ? stats.erase(it) : std::next(it);
  }
  return stats;
}

/// Mean |activation| over channels and over each mask footprint, with the feature map
/// bilinearly resized to the mask resolution. Empty masks score 0.
inline std::vector<double> activation_scores(const Tensor<float>& feature, const std::vector<BinaryMask>& masks) {
  std::vector<double> scores;
  if (masks.empty()) return scores;
  const int h = masks[0].height, w = masks[0].width;
  const Tensor<float> up = resize_bilinear(feature, h, w);
  std::vector<double> mean_abs(static_cast<std::size_t>(h) * w, 0.0);
  for (int c = 0; c < up.channels(); ++c) {
    const auto plane = up.channel(c);
    for (std::size_t i = 0; i < plane.size(); ++i) mean_abs[i] += std::abs(static_cast<double>(plane[i]));
  }
  for (auto& v : mean_abs) v /= up.channels();
  for (const auto& m : masks) {
    if (m.height != h || m.width != w) throw ShapeError("activation_scores: masks differ in size");
    double sum = 0;
    long n = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m.data[i]) {
        sum += mean_abs[i];
        ++n;
      }
    }
    scores.push_back(n ? sum / static_cast<double>(n) : 0.0);
  }
  return scores;
}

/// τ between emission order and the order of descending activation score.
inline double activation_order_correlation(const Tensor<float>& feature, const std::vector<BinaryMask>& emitted) {
  const auto masks = nonempty(emitted);
  if (masks.size() < 2) throw std::invalid_argument("activation_order_correlation: need at least 2 non-empty masks");
  std::vector<int> identity(masks.size());
  std::iota(identity.begin(), identity.end(), 0);
  return kendall_tau(identity, descending_order(activation_scores(feature, masks)));
}

}  // namespace seqseg::analysis
