#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seqseg/autodiff/graph.hpp"
#include "seqseg/core/errors.hpp"

namespace seqseg::model {

using autodiff::Graph;
using autodiff::Parameter;
using autodiff::Var;

/// Named learnable tensors in insertion order.
template <typename T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Parameter<T> param;
  };

  Parameter<T>& add(const std::string& name, Tensor<T> value) {
    if (index_.contains(name)) throw std::invalid_argument("duplicate parameter: " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back({name, Parameter<T>(std::move(value))});
    return entries_.back().param;
  }

  bool contains(const std::string& name) const { return index_.contains(name); }
  Parameter<T>& at(const std::string& name) { return entries_[find(name)].param; }
  const Parameter<T>& at(const std::string& name) const { return entries_[find(name)].param; }
  std::size_t find(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }

  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.param.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.param.zero_grad();
  }

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.param.value.template cast<U>());
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Resolves parameter names to graph leaves, binding each parameter at most once per graph.
template <typename T>
class BoundParameters {
 public:
  BoundParameters(Graph<T>& g, ParameterStore<T>& store) : g_(g), mutable_(&store), store_(&store) {}
  BoundParameters(Graph<T>& g, const ParameterStore<T>& store) : g_(g), store_(&store) {}

  Var operator()(const std::string& name) {
    const auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var v = (mutable_ && g_.grad_enabled()) ? g_.parameter(mutable_->at(name))
                                            : g_.constant_ref(store_->at(name).value);
    bound_.emplace(name, v);
    return v;
  }

  Graph<T>& graph() noexcept { return g_; }

 private:
  Graph<T>& g_;
  ParameterStore<T>* mutable_ = nullptr;
  const ParameterStore<T>* store_;
  std::unordered_map<std::string, Var> bound_;
};

namespace init {

template <typename T>
Tensor<T> uniform(int c, int h, int w, double limit, std::mt19937_64& rng) {
  Tensor<T> t(c, h, w);
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace init

}  // namespace seqseg::model
