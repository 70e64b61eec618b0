#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "sfat/numerics/tensor.hpp"

namespace sfat {

/// Named trainable tensors, iterated in lexicographic order of their paths.
template <typename T>
class ParameterSet {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> value);
  const Tensor<T>& get(const std::string& name) const;
  Tensor<T>& get(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }
  std::size_t total_elements() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

 private:
  std::map<std::string, Tensor<T>> params_;
};

// Glorot/Xavier uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

template <typename T>
Tensor<T> normal_init(Shape shape, double stddev, std::mt19937_64& rng);

}  // namespace sfat
