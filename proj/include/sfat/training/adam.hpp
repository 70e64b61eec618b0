#pragma once

#include <map>
#include <string>
#include <vector>

#include "sfat/numerics/parameters.hpp"

namespace sfat {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction and a constant learning rate. A parameter with
/// no gradient in a step is left alone, moments included (e.g. the decoder
/// during MLM pretraining).
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void step(ParameterSet<float>& params, double learning_rate);

  std::size_t steps() const { return t_; }
  const AdamOptions& options() const { return options_; }

  struct Moments {
    std::vector<float> m, v;
  };
  const std::map<std::string, Moments>& state() const { return state_; }
  // Restores a saved state; every entry must match a parameter's size.
  void restore(std::size_t steps, std::map<std::string, Moments> state);

 private:
  AdamOptions options_;
  std::size_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace sfat
