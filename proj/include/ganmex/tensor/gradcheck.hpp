#pragma once

#include <functional>

#include "ganmex/tensor/tensor.hpp"

namespace ganmex {

/// Central-difference gradient of a scalar function, one coordinate at a time.
/// Throws std::invalid_argument unless step > 0.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double step);

}  // namespace ganmex
