#include "sfat/training/adam.hpp"

#include <cmath>

#include "sfat/errors.hpp"

namespace sfat {

void Adam::step(ParameterSet<float>& params, double lr) {
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, double(t_)), c2 = 1.0 - std::pow(b2, double(t_));
  for (auto& [name, p] : params) {
    auto& st = state_[name];
    const std::size_t n = p.numel();
    if (st.m.size() != n) {
      st.m.assign(n, 0.0f);
      st.v.assign(n, 0.0f);
    }
    if (!p.has_grad()) continue;  // zero gradient with zero moments: nothing moves
    auto g = p.grad();
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g[i];
      const double m = b1 * st.m[i] + (1.0 - b1) * gi;
      const double v = b2 * st.v[i] + (1.0 - b2) * gi * gi;
      st.m[i] = static_cast<float>(m);
      st.v[i] = static_cast<float>(v);
      if (lr != 0.0) w[i] = static_cast<float>(w[i] - lr * (m / c1) / (std::sqrt(v / c2) + options_.eps));
    }
  }
}

void Adam::restore(std::size_t steps, std::map<std::string, Moments> state) {
  for (const auto& [name, mv] : state)
    if (mv.m.size() != mv.v.size()) throw DimensionError("adam state for " + name + " has mismatched moments");
  t_ = steps;
  state_ = std::move(state);
}

}  // namespace sfat
