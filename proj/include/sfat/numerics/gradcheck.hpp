#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sfat/numerics/parameters.hpp"

namespace sfat {

struct GradCheckOptions {
  double step = 1e-5;  // central-difference half width
  // Denominator floor: relative error = |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst_name;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of `loss_fn` against central finite
/// differences, element by element, for every listed leaf. The loss must be
/// a deterministic function of the leaves' current values.
GradCheckResult check_gradients(std::vector<std::pair<std::string, Tensor<double>>> leaves,
                                const std::function<Tensor<double>()>& loss_fn,
                                const GradCheckOptions& options = {});

GradCheckResult check_gradients(ParameterSet<double>& params,
                                const std::function<Tensor<double>()>& loss_fn,
                                const GradCheckOptions& options = {});

}  // namespace sfat
