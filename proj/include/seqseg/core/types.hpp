#pragma once

#include <array>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "seqseg/core/errors.hpp"
#include "seqseg/core/tensor.hpp"

namespace seqseg {

/// Normalized (x_min, y_min, x_max, y_max), exclusive upper edge.
using Box = std::array<double, 4>;

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int y, int x) noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const noexcept {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  std::size_t size() const noexcept { return data.size(); }
  long area() const noexcept { return std::accumulate(data.begin(), data.end(), 0L); }
  bool any() const noexcept { return area() > 0; }

  bool operator==(const BinaryMask&) const = default;
};

struct ImageSample {
  Tensor<float> pixels;  // 3×h×w, values in [0,1]

  int height() const noexcept { return pixels.height(); }
  int width() const noexcept { return pixels.width(); }
  bool operator==(const ImageSample&) const = default;
};

struct GroundTruthInstance {
  BinaryMask mask;
  Box box{};
  int class_id = 0;

  bool operator==(const GroundTruthInstance&) const = default;
};

template <typename T>
struct InstancePrediction {
  Tensor<T> mask;  // 1×h×w soft mask in [0,1]
  std::array<T, 4> box{};
  std::vector<T> class_probs;
  T stop_score{};

  int predicted_class() const {
    int best = 0;
    for (int c = 1; c < static_cast<int>(class_probs.size()); ++c) {
      if (class_probs[c] > class_probs[best]) best = c;
    }
    return best;
  }
  T max_class_prob() const { return class_probs[predicted_class()]; }
};

/// Predictions in emission order. `infer` may return an empty sequence.
template <typename T>
struct PredictionSequence {
  std::vector<InstancePrediction<T>> steps;

  std::size_t size() const noexcept { return steps.size(); }
  bool empty() const noexcept { return steps.empty(); }
  const InstancePrediction<T>& operator[](std::size_t i) const { return steps[i]; }
  InstancePrediction<T>& operator[](std::size_t i) { return steps[i]; }
};

/// Binary matching between n̂ predictions (rows) and n ground truths (columns).
class AssignmentMatrix {
 public:
  AssignmentMatrix() = default;
  AssignmentMatrix(int rows, int cols)
      : rows_(rows), cols_(cols), row_to_col_(rows, -1), col_to_row_(cols, -1) {}

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }

  void assign(int row, int col) {
    row_to_col_[row] = col;
    col_to_row_[col] = row;
  }
  bool operator()(int row, int col) const noexcept { return row_to_col_[row] == col; }
  /// Matched ground-truth column for a prediction row, or -1.
  int col_of(int row) const noexcept { return row_to_col_[row]; }
  int row_of(int col) const noexcept { return col_to_row_[col]; }
  int matched_count() const noexcept {
    int n = 0;
    for (int c : row_to_col_) n += c >= 0;
    return n;
  }

  bool operator==(const AssignmentMatrix&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> row_to_col_;
  std::vector<int> col_to_row_;
};

}  // namespace seqseg
