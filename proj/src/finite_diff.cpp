#include "featshield/finite_diff.hpp"

#include <algorithm>
#include <cmath>

namespace featshield {

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double step) {
    if (!(step > 0.0)) throw Error("finite_diff_gradient: step must be positive");
    Tensor grad(x.shape(), 0.0);
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + step;
        const double up = f(probe);
        probe[i] = orig - step;
        const double down = f(probe);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
    require_same_shape("max_relative_error", a.shape(), b.shape());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

}  // namespace featshield
