#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "seqseg/core/errors.hpp"

namespace seqseg {

/// Cache-line aligned storage. Vectorized kernels choose their code path from the buffer
/// alignment, so a fixed alignment keeps floating-point results reproducible run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense channel-major (C×H×W) tensor. Vectors are stored as C×1×1.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(int channels, int height, int width, T fill = T(0))
      : c_(channels), h_(height), w_(width),
        data_(static_cast<std::size_t>(channels) * height * width, fill) {
    assert(channels >= 0 && height >= 0 && width >= 0);
  }

  static Tensor vector(int n, T fill = T(0)) { return Tensor(n, 1, 1, fill); }

  int channels() const noexcept { return c_; }
  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  int plane() const noexcept { return h_ * w_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool same_shape(const Tensor& o) const noexcept {
    return c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }
  template <typename U>
  bool same_shape(const Tensor<U>& o) const noexcept {
    return c_ == o.channels() && h_ == o.height() && w_ == o.width();
  }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::span<T> channel(int c) noexcept {
    return std::span<T>(data_).subspan(static_cast<std::size_t>(c) * plane(), plane());
  }
  std::span<const T> channel(int c) const noexcept {
    return std::span<const T>(data_).subspan(static_cast<std::size_t>(c) * plane(), plane());
  }

  T& operator()(int c, int y, int x) noexcept { return data_[index(c, y, x)]; }
  const T& operator()(int c, int y, int x) const noexcept { return data_[index(c, y, x)]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(c_, h_, w_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const Tensor& o) const = default;

 private:
  std::size_t index(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * h_ + y) * w_ + x;
  }

  int c_ = 0;
  int h_ = 0;
  int w_ = 0;
  AlignedVector<T> data_;
};

inline std::string shape_string(int c, int h, int w) {
  return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

template <typename T>
std::string shape_string(const Tensor<T>& t) {
  return shape_string(t.channels(), t.height(), t.width());
}

template <typename T, typename U>
void require_same_shape(const Tensor<T>& a, const Tensor<U>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape " + shape_string(a) + " vs " + shape_string(b));
  }
}

}  // namespace seqseg
