#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "seqseg/model/parameters.hpp"

namespace seqseg::trainer {

using model::ParameterStore;

/// Adam with bias correction. Moments are kept per parameter in store order.
template <typename T>
class Adam {
 public:
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  Adam() = default;
  Adam(const ParameterStore<T>& store, double learning_rate) : lr(learning_rate) { reset(store); }

  void reset(const ParameterStore<T>& store) {
    m_.clear();
    v_.clear();
    for (const auto& e : store.entries()) {
      const auto& p = e.param.value;
      m_.emplace_back(p.channels(), p.height(), p.width());
      v_.emplace_back(p.channels(), p.height(), p.width());
    }
    steps_ = 0;
  }

  void step(ParameterStore<T>& store) {
    ++steps_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps_));
    const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
    const T step_size = static_cast<T>(lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    auto& entries = store.entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
      auto& p = entries[k].param;
      T* m = m_[k].data();
      T* v = v_[k].data();
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const T g = p.grad[i];
        m[i] = b1 * m[i] + (T(1) - b1) * g;
        v[i] = b2 * v[i] + (T(1) - b2) * g * g;
        p.value[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + static_cast<T>(eps));
      }
    }
  }

  long steps() const noexcept { return steps_; }
  void set_steps(long s) noexcept { steps_ = s; }
  std::vector<Tensor<T>>& first_moments() noexcept { return m_; }
  std::vector<Tensor<T>>& second_moments() noexcept { return v_; }
  const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }

 private:
  std::vector<Tensor<T>> m_, v_;
  long steps_ = 0;
};

}  // namespace seqseg::trainer
