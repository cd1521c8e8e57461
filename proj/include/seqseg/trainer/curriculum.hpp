#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "seqseg/core/types.hpp"

namespace seqseg::trainer {

struct CurriculumState {
  int current_max_objects = 2;
  int patience = 5;
  double plateau_eps = 1e-3;
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;
  int max_objects_cap = std::numeric_limits<int>::max();

  bool operator==(const CurriculumState&) const = default;
};

struct PlateauResult {
  CurriculumState state;
  bool advanced = false;
};

/// An epoch without relative improvement of more than `plateau_eps` counts towards patience.
/// After `patience` such epochs in a row the level advances by one and the counter restarts;
/// `best_val` is kept, so a flat loss advances again after another `patience` epochs.
inline PlateauResult plateau_check(CurriculumState s, double val_loss) {
  if (!std::isfinite(val_loss)) throw std::invalid_argument("plateau_check: validation loss is not finite");
  if (s.patience < 1) throw std::invalid_argument("plateau_check: patience must be >= 1");
  const bool stalled = val_loss > s.best_val * (1.0 - s.plateau_eps);
  if (!stalled) {
    s.best_val = val_loss;
    s.epochs_since_best = 0;
    return {s, false};
  }
  ++s.epochs_since_best;
  if (s.epochs_since_best >= s.patience && s.current_max_objects < s.max_objects_cap) {
    ++s.current_max_objects;
    s.epochs_since_best = 0;
    return {s, true};
  }
  return {s, false};
}

/// All instances when there are at most `k`, else the `k` largest by area (ties keep the
/// earlier instance). Kept instances stay in their original order.
inline std::vector<GroundTruthInstance> curriculum_filter(const std::vector<GroundTruthInstance>& gts, int k) {
  if (k < 2) throw std::invalid_argument("curriculum_filter: k must be >= 2");
  if (static_cast<int>(gts.size()) <= k) return gts;
  std::vector<std::size_t> idx(gts.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return gts[a].mask.area() > gts[b].mask.area(); });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  std::vector<GroundTruthInstance> out;
  for (std::size_t i : idx) out.push_back(gts[i]);
  return out;
}

}  // namespace seqseg::trainer
