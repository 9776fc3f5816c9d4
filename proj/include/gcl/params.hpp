#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gcl/rng.hpp"
#include "gcl/tensor.hpp"

namespace gcl {

/// Named trainable parameters in registration order.
template <class T>
class ParamStore {
public:
  Tensor<T> add(const std::string& name, Tensor<T> value) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
    value.set_requires_grad(true);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, value);
    return value;
  }

  /// Xavier-uniform matrix.
  Tensor<T> add_xavier(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<T> v(in * out);
    for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
    return add(name, Tensor<T>({in, out}, std::move(v)));
  }

  Tensor<T> add_normal(const std::string& name, Shape shape, double stddev, Rng& rng) {
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.normal(0.0, stddev));
    return add(name, Tensor<T>(std::move(shape), std::move(v)));
  }

  Tensor<T> add_constant(const std::string& name, Shape shape, T value) {
    return add(name, Tensor<T>::full(std::move(shape), value));
  }

  const Tensor<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return entries_[it->second].second;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : entries_) t.zero_grad();
  }

private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace gcl
