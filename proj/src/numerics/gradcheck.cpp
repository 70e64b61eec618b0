#include "sfat/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace sfat {

GradCheckResult check_gradients(std::vector<std::pair<std::string, Tensor<double>>> leaves,
                                const std::function<Tensor<double>()>& loss_fn,
                                const GradCheckOptions& options) {
  for (auto& [_, t] : leaves) t.zero_grad();
  backward(loss_fn());

  GradCheckResult result;
  NoGradGuard no_grad;
  for (auto& [name, t] : leaves) {
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + options.step;
      const double up = loss_fn().item();
      values[i] = original - options.step;
      const double down = loss_fn().item();
      values[i] = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double abs_err = std::abs(numeric - analytic[i]);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), options.floor});
      const double rel = abs_err / denom;
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      if (rel > result.max_rel_error || result.checked == 0) {
        result.max_rel_error = rel;
        result.worst_name = name;
        result.worst_index = i;
      }
      ++result.checked;
    }
  }
  return result;
}

GradCheckResult check_gradients(ParameterSet<double>& params,
                                const std::function<Tensor<double>()>& loss_fn,
                                const GradCheckOptions& options) {
  std::vector<std::pair<std::string, Tensor<double>>> leaves;
  for (auto& [name, t] : params) leaves.emplace_back(name, t);
  return check_gradients(std::move(leaves), loss_fn, options);
}

}  // namespace sfat
