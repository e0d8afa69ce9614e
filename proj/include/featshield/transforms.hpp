#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "featshield/autodiff.hpp"
#include "featshield/image.hpp"

namespace featshield {

enum class TransformKind { identity, gaussian_blur, gaussian_noise, resize_restore, crop_restore, occlusion };

std::string to_string(TransformKind kind);
TransformKind transform_kind_from_string(const std::string& name);

/// One image transformation with validated parameters. Random geometry and
/// noise are a pure function of `seed`, so a spec applies identically every time.
class TransformSpec {
public:
    static TransformSpec identity();
    /// Odd kernel >= 3; sigma <= 0 selects kernel/3.
    static TransformSpec gaussian_blur(std::size_t kernel, double sigma = 0.0);
    /// Sigma in 1/255 pixel units.
    static TransformSpec gaussian_noise(double sigma_255, std::uint64_t seed = 0);
    /// Downsample/upsample by `scale` in (0.5, 1.5], then resample back.
    static TransformSpec resize_restore(double scale);
    /// Keeps a random window covering `fraction` of each side, zero elsewhere. fraction in (0.5, 1].
    static TransformSpec crop_restore(double fraction, std::uint64_t seed = 0);
    /// Zeros a random square covering `fraction` of the area, fraction in (0, 0.25].
    static TransformSpec occlusion(double fraction, std::uint64_t seed = 0);

    TransformKind kind() const { return kind_; }
    std::size_t kernel() const { return kernel_; }
    double sigma() const { return sigma_; }
    double amount() const { return amount_; }
    std::uint64_t seed() const { return seed_; }
    TransformSpec with_seed(std::uint64_t seed) const;

    /// Short name, e.g. "blur3", "noise5", "resize0.75".
    std::string label() const;
    /// Normalized blur kernel; empty tensor for other kinds.
    Tensor blur_kernel() const;

    friend bool operator==(const TransformSpec&, const TransformSpec&) = default;

private:
    TransformSpec() = default;

    TransformKind kind_ = TransformKind::identity;
    std::size_t kernel_ = 0;
    double sigma_ = 0.0;
    double amount_ = 0.0;
    std::uint64_t seed_ = 0;
};

/// Parses labels produced by TransformSpec::label().
TransformSpec parse_transform(const std::string& label);

/// Differentiable application; output is clamped to [0,1] and keeps the input shape.
Var apply_transform(const TransformSpec& spec, Var image);
Image apply_transform(const TransformSpec& spec, const Image& image);
/// Applies specs left to right.
Var apply_transforms(const std::vector<TransformSpec>& specs, Var image);

/// Weighted candidate set sampled each optimization step.
struct EotPolicy {
    struct Candidate {
        TransformSpec spec;
        double weight = 1.0;
    };
    std::vector<Candidate> candidates;
    std::size_t per_iteration = 1;
    std::uint64_t seed = 0;

    static EotPolicy identity_only();
    /// Mild version of every kind: blur3, noise 5/255, resize 0.75, crop 0.9, occlusion 0.1.
    static EotPolicy default_policy(std::uint64_t seed = 0);
    void validate() const;
};

/// Deterministic in (policy.seed, iteration); each returned spec carries its own derived seed.
std::vector<TransformSpec> sample_transforms(const EotPolicy& policy, std::size_t iteration);

/// Post-processing severities used for robustness evaluation: blur 3x3 and 5x5,
/// noise 5/255 and 10/255, resize 0.75, crop 0.9, occlusion 0.1.
std::vector<TransformSpec> evaluation_suite();

}  // namespace featshield
