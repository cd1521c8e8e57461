#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "seqseg/autodiff/graph.hpp"
#include "seqseg/core/errors.hpp"
#include "seqseg/core/resample.hpp"
#include "seqseg/core/tensor.hpp"

namespace seqseg::autodiff {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

inline int conv_out_size(int in, int k, int stride) {
  const int pad = k / 2;
  return (in + 2 * pad - k) / stride + 1;
}

// Row r = (ci*k + ky)*k + kx, column = oy*out_w + ox.
template <typename T>
void im2col(const Tensor<T>& x, int k, int stride, int out_h, int out_w, T* cols) {
  const int pad = k / 2, H = x.height(), W = x.width();
  const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
  for (int ci = 0; ci < x.channels(); ++ci) {
    const T* src = x.channel(ci).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * n;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* line = src + static_cast<std::size_t>(iy) * W;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < W) ? line[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int k, int stride, int out_h, int out_w, Tensor<T>& dx) {
  const int pad = k / 2, H = dx.height(), W = dx.width();
  const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
  for (int ci = 0; ci < dx.channels(); ++ci) {
    T* dst = dx.channel(ci).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * n;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          T* line = dst + static_cast<std::size_t>(iy) * W;
          const T* src = row + static_cast<std::size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) line[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

}  // namespace detail

/// 2-D convolution with "same" padding. Weights are stored as cout × cin × (k·k).
template <typename T>
Var conv2d(Graph<T>& g, Var x, Var w, Var b, int stride = 1) {
  const Tensor<T>& X = g.value(x);
  const Tensor<T>& Wt = g.value(w);
  const int cout = Wt.channels(), cin = Wt.height();
  const int k = static_cast<int>(std::lround(std::sqrt(Wt.width())));
  if (k * k != Wt.width() || cin != X.channels() || g.value(b).size() != static_cast<std::size_t>(cout)) {
    throw ShapeError("conv2d: input " + shape_string(X) + " weight " + shape_string(Wt));
  }
  const int oh = detail::conv_out_size(X.height(), k, stride);
  const int ow = detail::conv_out_size(X.width(), k, stride);
  const int K = cin * k * k, N = oh * ow;
  const bool direct = (k == 1 && stride == 1);

  Tensor<T> cols;
  if (!direct) {
    cols = Tensor<T>(1, K, N);
    detail::im2col(X, k, stride, oh, ow, cols.data());
  }
  Tensor<T> out(cout, oh, ow);
  {
    detail::MapConstMat<T> Wm(Wt.data(), cout, K);
    detail::MapConstMat<T> Cm(direct ? X.data() : cols.data(), K, N);
    detail::MapMat<T> Om(out.data(), cout, N);
    Om.noalias() = Wm * Cm;
    const T* bias = g.value(b).data();
    for (int co = 0; co < cout; ++co) Om.row(co).array() += bias[co];
  }

  const bool needs = g.any_requires_grad({x, w, b});
  if (!needs || !g.requires_grad(w)) cols = Tensor<T>();
  return g.record(
      std::move(out), needs,
      [x, w, b, k, stride, oh, ow, K, N, cout, direct, cols = std::move(cols)](
          Graph<T>& g, const Tensor<T>&, const Tensor<T>& dout) {
        detail::MapConstMat<T> dO(dout.data(), cout, N);
        if (g.requires_grad(b)) {
          T* db = g.grad(b).data();
          for (int co = 0; co < cout; ++co) db[co] += dO.row(co).sum();
        }
        if (g.requires_grad(w)) {
          const T* src = direct ? g.value(x).data() : cols.data();
          detail::MapConstMat<T> Cm(src, K, N);
          detail::MapMat<T> dW(g.grad(w).data(), cout, K);
          dW.noalias() += dO * Cm.transpose();
        }
        if (g.requires_grad(x)) {
          detail::MapConstMat<T> Wm(g.value(w).data(), cout, K);
          Tensor<T>& dx = g.grad(x);
          if (direct) {
            detail::MapMat<T> dX(dx.data(), K, N);
            dX.noalias() += Wm.transpose() * dO;
          } else {
            AlignedVector<T> dcols(static_cast<std::size_t>(K) * N);
            detail::MapMat<T> dC(dcols.data(), K, N);
            dC.noalias() = Wm.transpose() * dO;
            detail::col2im_add(dcols.data(), k, stride, oh, ow, dx);
          }
        }
      });
}

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "add");
  Tensor<T> out = g.value(a);
  const Tensor<T>& B = g.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  return g.record(std::move(out), g.any_requires_grad({a, b}),
                  [a, b](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
                    g.accumulate(a, d);
                    g.accumulate(b, d);
                  });
}

template <typename T>
Var mul(Graph<T>& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "mul");
  Tensor<T> out = g.value(a);
  const Tensor<T>& B = g.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return g.record(std::move(out), g.any_requires_grad({a, b}),
                  [a, b](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
                    if (g.requires_grad(a)) {
                      Tensor<T>& da = g.grad(a);
                      const Tensor<T>& B = g.value(b);
                      for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * B[i];
                    }
                    if (g.requires_grad(b)) {
                      Tensor<T>& db = g.grad(b);
                      const Tensor<T>& A = g.value(a);
                      for (std::size_t i = 0; i < d.size(); ++i) db[i] += d[i] * A[i];
                    }
                  });
}

template <typename T>
Var relu(Graph<T>& g, Var a) {
  Tensor<T> out = g.value(a);
  for (auto& v : out.values()) v = v > T(0) ? v : T(0);
  return g.record(std::move(out), g.any_requires_grad({a}),
                  [a](Graph<T>& g, const Tensor<T>& y, const Tensor<T>& d) {
                    Tensor<T>& da = g.grad(a);
                    for (std::size_t i = 0; i < d.size(); ++i) {
                      if (y[i] > T(0)) da[i] += d[i];
                    }
                  });
}

template <typename T>
Var sigmoid(Graph<T>& g, Var a) {
  Tensor<T> out = g.value(a);
  for (auto& v : out.values()) v = detail::sigmoid(v);
  return g.record(std::move(out), g.any_requires_grad({a}),
                  [a](Graph<T>& g, const Tensor<T>& y, const Tensor<T>& d) {
                    Tensor<T>& da = g.grad(a);
                    for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * y[i] * (T(1) - y[i]);
                  });
}

/// Softmax over all elements.
template <typename T>
Var softmax(Graph<T>& g, Var a) {
  Tensor<T> out = g.value(a);
  const T peak = *std::max_element(out.data(), out.data() + out.size());
  T sum = 0;
  for (auto& v : out.values()) sum += (v = std::exp(v - peak));
  for (auto& v : out.values()) v /= sum;
  return g.record(std::move(out), g.any_requires_grad({a}),
                  [a](Graph<T>& g, const Tensor<T>& y, const Tensor<T>& d) {
                    T dot = 0;
                    for (std::size_t i = 0; i < d.size(); ++i) dot += d[i] * y[i];
                    Tensor<T>& da = g.grad(a);
                    for (std::size_t i = 0; i < d.size(); ++i) da[i] += y[i] * (d[i] - dot);
                  });
}

template <typename T>
Var concat_channels(Graph<T>& g, const std::vector<Var>& parts) {
  const Tensor<T>& first = g.value(parts.front());
  int channels = 0;
  for (Var p : parts) {
    const Tensor<T>& v = g.value(p);
    if (v.height() != first.height() || v.width() != first.width()) {
      throw ShapeError("concat_channels: " + shape_string(v) + " vs " + shape_string(first));
    }
    channels += v.channels();
  }
  Tensor<T> out(channels, first.height(), first.width());
  std::size_t offset = 0;
  bool needs = false;
  for (Var p : parts) {
    const Tensor<T>& v = g.value(p);
    std::copy(v.data(), v.data() + v.size(), out.data() + offset);
    offset += v.size();
    needs = needs || g.any_requires_grad({p});
  }
  return g.record(std::move(out), needs, [parts](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
    std::size_t offset = 0;
    for (Var p : parts) {
      const std::size_t n = g.value(p).size();
      if (g.requires_grad(p)) {
        Tensor<T>& dp = g.grad(p);
        for (std::size_t i = 0; i < n; ++i) dp[i] += d[offset + i];
      }
      offset += n;
    }
  });
}

/// Bilinear resampling to an arbitrary size (half-pixel centers).
template <typename T>
Var resize_bilinear(Graph<T>& g, Var a, int out_h, int out_w) {
  const Tensor<T>& A = g.value(a);
  Tensor<T> out = seqseg::resize_bilinear(A, out_h, out_w);
  const int in_h = A.height(), in_w = A.width();
  return g.record(std::move(out), g.any_requires_grad({a}),
                  [a, in_h, in_w, out_h, out_w](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
                    const auto ty = LinearTaps::make(in_h, out_h);
                    const auto tx = LinearTaps::make(in_w, out_w);
                    Tensor<T>& da = g.grad(a);
                    for (int c = 0; c < d.channels(); ++c) {
                      for (int y = 0; y < out_h; ++y) {
                        const T fy = static_cast<T>(ty.frac[y]);
                        for (int x = 0; x < out_w; ++x) {
                          const T fx = static_cast<T>(tx.frac[x]);
                          const T v = d(c, y, x);
                          da(c, ty.lo[y], tx.lo[x]) += v * (T(1) - fy) * (T(1) - fx);
                          da(c, ty.lo[y], tx.hi[x]) += v * (T(1) - fy) * fx;
                          da(c, ty.hi[y], tx.lo[x]) += v * fy * (T(1) - fx);
                          da(c, ty.hi[y], tx.hi[x]) += v * fy * fx;
                        }
                      }
                    }
                  });
}

template <typename T>
Var upsample2x(Graph<T>& g, Var a) {
  return resize_bilinear(g, a, 2 * g.value(a).height(), 2 * g.value(a).width());
}

/// Channel-wise global max; output is C×1×1.
template <typename T>
Var global_max_pool(Graph<T>& g, Var a) {
  const Tensor<T>& A = g.value(a);
  Tensor<T> out(A.channels(), 1, 1);
  std::vector<int> arg(A.channels());
  for (int c = 0; c < A.channels(); ++c) {
    const auto plane = A.channel(c);
    const auto it = std::max_element(plane.begin(), plane.end());
    arg[c] = static_cast<int>(it - plane.begin());
    out[c] = *it;
  }
  const int plane = A.plane();
  return g.record(std::move(out), g.any_requires_grad({a}),
                  [a, arg = std::move(arg), plane](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
                    Tensor<T>& da = g.grad(a);
                    for (std::size_t c = 0; c < arg.size(); ++c) {
                      da[c * plane + arg[c]] += d[c];
                    }
                  });
}

/// Fully connected layer on a flattened input. Weights are out × in × 1.
template <typename T>
Var linear(Graph<T>& g, Var x, Var w, Var b) {
  const Tensor<T>& X = g.value(x);
  const Tensor<T>& Wt = g.value(w);
  const int out_n = Wt.channels(), in_n = Wt.height();
  if (static_cast<std::size_t>(in_n) != X.size() || Wt.width() != 1) {
    throw ShapeError("linear: input " + shape_string(X) + " weight " + shape_string(Wt));
  }
  Tensor<T> out = Tensor<T>::vector(out_n);
  {
    detail::MapConstMat<T> Wm(Wt.data(), out_n, in_n);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xv(X.data(), in_n);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> ov(out.data(), out_n);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bv(g.value(b).data(), out_n);
    ov.noalias() = Wm * xv + bv;
  }
  return g.record(std::move(out), g.any_requires_grad({x, w, b}),
                  [x, w, b, out_n, in_n](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
                    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> dv(d.data(), out_n);
                    if (g.requires_grad(b)) {
                      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(g.grad(b).data(), out_n) += dv;
                    }
                    if (g.requires_grad(w)) {
                      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xv(g.value(x).data(), in_n);
                      detail::MapMat<T>(g.grad(w).data(), out_n, in_n).noalias() += dv * xv.transpose();
                    }
                    if (g.requires_grad(x)) {
                      detail::MapConstMat<T> Wm(g.value(w).data(), out_n, in_n);
                      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(g.grad(x).data(), in_n).noalias() +=
                          Wm.transpose() * dv;
                    }
                  });
}

// ConvLSTM gate layout along channels: [input, forget, output, candidate].

/// c' = σ(f)⊙c + σ(i)⊙tanh(g)
template <typename T>
Var lstm_cell_state(Graph<T>& g, Var gates, Var cell) {
  const Tensor<T>& G = g.value(gates);
  const Tensor<T>& C = g.value(cell);
  const int ch = C.channels();
  if (G.channels() != 4 * ch || G.height() != C.height() || G.width() != C.width()) {
    throw ShapeError("lstm_cell_state: gates " + shape_string(G) + " cell " + shape_string(C));
  }
  const std::size_t n = C.size();
  Tensor<T> out(C.channels(), C.height(), C.width());
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = detail::sigmoid(G[n + i]) * C[i] + detail::sigmoid(G[i]) * std::tanh(G[3 * n + i]);
  }
  return g.record(std::move(out), g.any_requires_grad({gates, cell}),
                  [gates, cell, n](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
                    const Tensor<T>& G = g.value(gates);
                    const Tensor<T>& C = g.value(cell);
                    if (g.requires_grad(cell)) {
                      Tensor<T>& dc = g.grad(cell);
                      for (std::size_t i = 0; i < n; ++i) dc[i] += d[i] * detail::sigmoid(G[n + i]);
                    }
                    if (g.requires_grad(gates)) {
                      Tensor<T>& dg = g.grad(gates);
                      for (std::size_t i = 0; i < n; ++i) {
                        const T ig = detail::sigmoid(G[i]);
                        const T fg = detail::sigmoid(G[n + i]);
                        const T cand = std::tanh(G[3 * n + i]);
                        dg[i] += d[i] * cand * ig * (T(1) - ig);
                        dg[n + i] += d[i] * C[i] * fg * (T(1) - fg);
                        dg[3 * n + i] += d[i] * ig * (T(1) - cand * cand);
                      }
                    }
                  });
}

/// h' = σ(o)⊙tanh(c')
template <typename T>
Var lstm_hidden(Graph<T>& g, Var gates, Var cell) {
  const Tensor<T>& G = g.value(gates);
  const Tensor<T>& C = g.value(cell);
  const std::size_t n = C.size();
  if (G.size() != 4 * n) throw ShapeError("lstm_hidden: gates " + shape_string(G) + " cell " + shape_string(C));
  Tensor<T> out(C.channels(), C.height(), C.width());
  for (std::size_t i = 0; i < n; ++i) out[i] = detail::sigmoid(G[2 * n + i]) * std::tanh(C[i]);
  return g.record(std::move(out), g.any_requires_grad({gates, cell}),
                  [gates, cell, n](Graph<T>& g, const Tensor<T>&, const Tensor<T>& d) {
                    const Tensor<T>& G = g.value(gates);
                    const Tensor<T>& C = g.value(cell);
                    if (g.requires_grad(cell)) {
                      Tensor<T>& dc = g.grad(cell);
                      for (std::size_t i = 0; i < n; ++i) {
                        const T tc = std::tanh(C[i]);
                        dc[i] += d[i] * detail::sigmoid(G[2 * n + i]) * (T(1) - tc * tc);
                      }
                    }
                    if (g.requires_grad(gates)) {
                      Tensor<T>& dg = g.grad(gates);
                      for (std::size_t i = 0; i < n; ++i) {
                        const T og = detail::sigmoid(G[2 * n + i]);
                        dg[2 * n + i] += d[i] * std::tanh(C[i]) * og * (T(1) - og);
                      }
                    }
                  });
}

}  // namespace seqseg::autodiff
