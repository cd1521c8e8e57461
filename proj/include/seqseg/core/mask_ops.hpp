#pragma once

#include <algorithm>
#include <utility>

#include "seqseg/core/errors.hpp"
#include "seqseg/core/tensor.hpp"
#include "seqseg/core/types.hpp"

namespace seqseg {

inline constexpr double kDefaultMaskThreshold = 0.5;

/// Tight normalized box of the foreground: (x_min/w, y_min/h, (x_max+1)/w, (y_max+1)/h).
inline Box box_from_mask(const BinaryMask& mask) {
  int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) throw EmptyMaskError("box_from_mask: mask has no foreground pixel");
  const double w = mask.width, h = mask.height;
  return {x0 / w, y0 / h, (x1 + 1) / w, (y1 + 1) / h};
}

/// Mean (row, col) over foreground pixels.
inline std::pair<double, double> center_of_mass(const BinaryMask& mask) {
  double rows = 0, cols = 0;
  long count = 0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      rows += y;
      cols += x;
      ++count;
    }
  }
  if (count == 0) throw EmptyMaskError("center_of_mass: mask has no foreground pixel");
  return {rows / count, cols / count};
}

/// Elementwise `value >= threshold` over the first channel of a soft mask.
template <typename T>
BinaryMask binarize(const Tensor<T>& soft, double threshold = kDefaultMaskThreshold) {
  BinaryMask out(soft.height(), soft.width());
  const auto plane = soft.channel(0);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = static_cast<double>(plane[i]) >= threshold ? 1 : 0;
  }
  return out;
}

inline BinaryMask binarize(const BinaryMask& mask, double threshold = kDefaultMaskThreshold) {
  BinaryMask out = mask;
  for (auto& v : out.data) v = v >= threshold ? 1 : 0;
  return out;
}

template <typename T>
Tensor<T> to_tensor(const BinaryMask& mask) {
  Tensor<T> out(1, mask.height, mask.width);
  for (std::size_t i = 0; i < mask.data.size(); ++i) out[i] = mask.data[i] ? T(1) : T(0);
  return out;
}

inline long intersection_area(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("mask shapes differ: " + shape_string(1, a.height, a.width) + " vs " +
                     shape_string(1, b.height, b.width));
  }
  long n = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) n += (a.data[i] && b.data[i]);
  return n;
}

}  // namespace seqseg
