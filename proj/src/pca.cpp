#include "featshield/pca.hpp"

#include <cmath>

#include "featshield/random.hpp"

namespace featshield {

PcaProjection pca_power_iteration(const Tensor& samples, std::size_t k, std::size_t iterations, std::uint64_t seed) {
    if (samples.rank() != 2) throw Error("pca: expected [N,D] samples, got " + shape_str(samples.shape()));
    const std::size_t n = samples.dim(0), d = samples.dim(1);
    if (n < 2) throw Error("pca: need at least two samples");
    if (k < 1 || k > d) throw Error("pca: component count out of range");

    PcaProjection out;
    out.mean = Tensor({d}, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out.mean[j] += samples[i * d + j];
    for (auto& v : out.mean.values()) v /= static_cast<double>(n);

    Tensor cov({d, d}, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a) {
            const double xa = samples[i * d + a] - out.mean[a];
            for (std::size_t b = 0; b < d; ++b) cov[a * d + b] += xa * (samples[i * d + b] - out.mean[b]);
        }
    for (auto& v : cov.values()) v /= static_cast<double>(n - 1);

    Rng rng(seed);
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> v(d), w(d);
        for (auto& x : v) x = rng.normal();
        double lambda = 0.0;
        for (std::size_t it = 0; it < iterations; ++it) {
            for (std::size_t a = 0; a < d; ++a) {
                double s = 0.0;
                for (std::size_t b = 0; b < d; ++b) s += cov[a * d + b] * v[b];
                w[a] = s;
            }
            double norm = 0.0;
            for (double x : w) norm += x * x;
            norm = std::sqrt(norm);
            // Remaining covariance is numerically zero: any unit vector orthogonal to earlier ones will do.
            if (norm < 1e-300) break;
            lambda = norm;
            for (std::size_t a = 0; a < d; ++a) v[a] = w[a] / norm;
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        Tensor comp({d});
        for (std::size_t a = 0; a < d; ++a) comp[a] = v[a] / norm;
        // Deflate: cov -= lambda * v v^T
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) cov[a * d + b] -= lambda * comp[a] * comp[b];
        out.components.push_back(std::move(comp));
        out.eigenvalues.push_back(lambda);
    }

    out.coords = Tensor({n, k}, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) {
            double s = 0.0;
            for (std::size_t a = 0; a < d; ++a) s += (samples[i * d + a] - out.mean[a]) * out.components[c][a];
            out.coords[i * k + c] = s;
        }
    return out;
}

}  // namespace featshield
