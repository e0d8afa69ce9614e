#pragma once

#include <functional>

#include "featshield/tensor.hpp"

namespace featshield {

/// Central-difference gradient of a scalar function. Evaluates f 2*size(x) times;
/// shares no code with the tape and serves as the gradient oracle.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double step);

/// Largest elementwise |a-b| / max(|a|, |b|, floor).
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8);

}  // namespace featshield
