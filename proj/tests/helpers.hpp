#pragma once

#include <filesystem>
#include <string>

#include "featshield/autodiff.hpp"
#include "featshield/finite_diff.hpp"
#include "featshield/image.hpp"
#include "featshield/random.hpp"

namespace testing {

using namespace featshield;

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

inline Image random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    return Image(random_tensor({h, w, 3}, seed, 0.05, 0.95));
}

/// Max relative error between tape and finite-difference gradients of a scalar-valued graph.
template <class Build>
double grad_check(Build build, const Tensor& x, double step = 1e-6) {
    Tape tape;
    Var v = tape.variable(x);
    Var out = build(v);
    tape.backward(out);
    const Tensor analytic = tape.grad(v);
    const Tensor numeric = finite_diff_gradient(
        [&](const Tensor& xx) {
            Tape t;
            return build(t.constant(xx)).value().item();
        },
        x, step);
    return max_relative_error(analytic, numeric);
}

/// Reduces any tensor to a scalar with fixed random weights, so every output entry matters.
inline Var weighted_sum(Var y, std::uint64_t seed) {
    return ops::sum(ops::mask_mul(y, random_tensor(y.shape(), seed ^ 0xABCDEF)));
}

class TempDir {
public:
    explicit TempDir(const std::string& name)
        : path_(std::filesystem::temp_directory_path() / ("featshield_test_" + name)) {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

}  // namespace testing
