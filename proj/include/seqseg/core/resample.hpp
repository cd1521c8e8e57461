#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "seqseg/core/tensor.hpp"
#include "seqseg/core/types.hpp"

namespace seqseg {

/// Interpolation taps for one axis, half-pixel centers (no corner alignment).
struct LinearTaps {
  std::vector<int> lo;
  std::vector<int> hi;
  std::vector<double> frac;  // weight of `hi`

  static LinearTaps make(int in, int out) {
    LinearTaps t;
    t.lo.resize(out);
    t.hi.resize(out);
    t.frac.resize(out);
    const double scale = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
      double src = std::max((i + 0.5) * scale - 0.5, 0.0);
      int lo = std::min(static_cast<int>(std::floor(src)), in - 1);
      t.lo[i] = lo;
      t.hi[i] = std::min(lo + 1, in - 1);
      t.frac[i] = src - lo;
    }
    return t;
  }
};

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& in, int out_h, int out_w) {
  const auto ty = LinearTaps::make(in.height(), out_h);
  const auto tx = LinearTaps::make(in.width(), out_w);
  Tensor<T> out(in.channels(), out_h, out_w);
  for (int c = 0; c < in.channels(); ++c) {
    for (int y = 0; y < out_h; ++y) {
      const T fy = static_cast<T>(ty.frac[y]);
      for (int x = 0; x < out_w; ++x) {
        const T fx = static_cast<T>(tx.frac[x]);
        const T top = in(c, ty.lo[y], tx.lo[x]) * (T(1) - fx) + in(c, ty.lo[y], tx.hi[x]) * fx;
        const T bot = in(c, ty.hi[y], tx.lo[x]) * (T(1) - fx) + in(c, ty.hi[y], tx.hi[x]) * fx;
        out(c, y, x) = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  return out;
}

/// Nearest-neighbour resize, sampling the source pixel under each target pixel center.
inline BinaryMask resize_nearest(const BinaryMask& in, int out_h, int out_w) {
  BinaryMask out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(static_cast<int>((y + 0.5) * in.height / out_h), in.height - 1);
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(static_cast<int>((x + 0.5) * in.width / out_w), in.width - 1);
      out.at(y, x) = in.at(sy, sx);
    }
  }
  return out;
}

}  // namespace seqseg
