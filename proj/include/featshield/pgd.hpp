#pragma once

#include <cstdint>
#include <vector>

#include "featshield/encoder.hpp"
#include "featshield/objective.hpp"
#include "featshield/transforms.hpp"

namespace featshield {

struct PgdConfig {
    double epsilon = 8.0 / 255.0;
    double step = 1.0 / 255.0;
    std::size_t iterations = 1000;
    double init_sigma = 1.0 / 255.0;
    EotPolicy eot = EotPolicy::identity_only();
    std::uint64_t seed = 0;
    /// Loss trace is recorded every `trace_every` iterations and at the end.
    std::size_t trace_every = 10;

    void validate() const;
};

struct TracePoint {
    std::size_t iteration = 0;
    double loss = 0.0;
    double cos_base = 0.0;
};

struct ProtectionResult {
    Image protected_image;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double initial_cos_base = 0.0;
    double final_cos_base = 0.0;
    double final_cos_target = 0.0;
    double linf = 0.0;
    /// Iterates found outside the eps-ball or [0,1]; zero unless projection is broken.
    std::size_t feasibility_violations = 0;
    std::vector<TracePoint> trace;
    double wall_seconds = 0.0;
};

/// Clip(x + N(0, sigma^2)) projected into the eps-ball; seeded by cfg.seed.
Image init_perturbed(const Image& x, const PgdConfig& cfg);

/// clamp(x', x - eps, x + eps), then clamp to [0,1]. The result satisfies
/// |x'_i - x_i| <= eps in floating point, not only in exact arithmetic.
Image project_linf(const Image& x_prime, const Image& x, double epsilon);

/// Loss and input gradient at x_k with the given transforms applied before the encoder.
struct LossGradient {
    double loss = 0.0;
    Tensor grad;
};
LossGradient loss_gradient(const Image& x_k, const AnchorPair& anchor, const EncoderParams& params,
                           const ObjectiveConfig& obj, const std::vector<TransformSpec>& transforms);

/// One sign-gradient descent step with transforms sampled for `iteration`.
/// Throws if the gradient is not finite.
Image pgd_step(const Image& x_k, const Image& x, const AnchorPair& anchor, const EncoderParams& params,
               const ObjectiveConfig& obj, const PgdConfig& cfg, std::size_t iteration);

/// Full protection loop for one image.
ProtectionResult protect_image(const Image& x, const EncoderParams& params, const ObjectiveConfig& obj,
                               const PgdConfig& cfg);

}  // namespace featshield
