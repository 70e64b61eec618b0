#include "sfat/numerics/parameters.hpp"

#include <cmath>

#include "sfat/errors.hpp"

namespace sfat {

template <typename T>
Tensor<T>& ParameterSet<T>::add(const std::string& name, Tensor<T> value) {
  if (params_.count(name)) throw ContractError("duplicate parameter name: " + name);
  value.node()->requires_grad = true;
  return params_.emplace(name, std::move(value)).first->second;
}

template <typename T>
const Tensor<T>& ParameterSet<T>::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw IndexError("unknown parameter: " + name);
  return it->second;
}

template <typename T>
Tensor<T>& ParameterSet<T>::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw IndexError("unknown parameter: " + name);
  return it->second;
}

template <typename T>
std::size_t ParameterSet<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

template <typename T>
Tensor<T> glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  std::vector<T> v(fan_in * fan_out);
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>({fan_in, fan_out}, std::move(v));
}

template <typename T>
Tensor<T> normal_init(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(v));
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template Tensor<float> glorot_uniform<float>(std::size_t, std::size_t, std::mt19937_64&);
template Tensor<double> glorot_uniform<double>(std::size_t, std::size_t, std::mt19937_64&);
template Tensor<float> normal_init<float>(Shape, double, std::mt19937_64&);
template Tensor<double> normal_init<double>(Shape, double, std::mt19937_64&);

}  // namespace sfat
