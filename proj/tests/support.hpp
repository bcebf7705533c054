#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "ganmex/tensor/random.hpp"
#include "ganmex/tensor/tensor.hpp"

namespace test_support {

inline ganmex::Tensor random_tensor(ganmex::Rng& rng, ganmex::Shape shape, double lo = -1.0, double hi = 1.0) {
    ganmex::Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.values()) v = u(rng);
    return t;
}

/// |a - b| relative to the larger magnitude, with a floor that keeps tiny
/// gradients from amplifying finite-difference truncation error.
inline double relative_error(double a, double b, double floor = 1e-2) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_abs_diff(const ganmex::Tensor& a, const ganmex::Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace test_support
