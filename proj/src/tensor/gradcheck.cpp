#include "ganmex/tensor/gradcheck.hpp"

#include <stdexcept>

namespace ganmex {

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double step) {
    if (!(step > 0.0)) throw std::invalid_argument("finite_difference_gradient: step must be positive");
    Tensor probe = x;
    Tensor grad = Tensor::like(x);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double original = probe[i];
        probe[i] = original + step;
        const double up = f(probe);
        probe[i] = original - step;
        const double down = f(probe);
        probe[i] = original;
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

}  // namespace ganmex
