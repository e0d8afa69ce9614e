#pragma once

#include <cstdint>
#include <vector>

#include "featshield/tensor.hpp"

namespace featshield {

struct PcaProjection {
    Tensor mean;                      // [D]
    std::vector<Tensor> components;   // unit vectors [D], leading first
    std::vector<double> eigenvalues;  // covariance eigenvalue estimates
    Tensor coords;                    // [N, k]
};

/// Top-k principal components of the rows of `samples` ([N,D]) by power
/// iteration with deflation on the centered covariance. Start vectors are seeded.
PcaProjection pca_power_iteration(const Tensor& samples, std::size_t k = 2, std::size_t iterations = 100,
                                  std::uint64_t seed = 0);

}  // namespace featshield
