#pragma once

#include <span>

#include "featshield/autodiff.hpp"
#include "featshield/encoder.hpp"

namespace featshield {

/// Weights of the push/pull objective.
struct ObjectiveConfig {
    double alpha = 10.0;  // repulsion strength
    double beta = 1.0;    // weight of the attraction term
    double xi = 1e-8;     // keeps the log argument positive

    void validate() const;
};

/// Clean embedding of an image and its antithetical target. Both are constants.
struct AnchorPair {
    Tensor z_base;
    Tensor z_target;  // -z_base scaled to unit l2 norm over all L*D entries
};

double cos_sim(std::span<const double> a, std::span<const double> b);
double cos_sim(const Tensor& a, const Tensor& b);
/// Cosine between a differentiable tensor and a constant one, over all entries.
Var cos_sim(Var a, const Tensor& constant);

AnchorPair make_anchor(const Tensor& z_base);
AnchorPair make_anchor(const EncoderParams& params, const Image& x);

/// exp(alpha * cos(vec z_adv, vec z_base))
Var loss_push(Var z_adv, const AnchorPair& anchor, const ObjectiveConfig& cfg);
/// -log((cos(vec z_adv, vec z_target) + 1) / 2 + xi)
Var loss_pull(Var z_adv, const AnchorPair& anchor, const ObjectiveConfig& cfg);
/// loss_push + beta * loss_pull
Var loss_total(Var z_adv, const AnchorPair& anchor, const ObjectiveConfig& cfg);

double loss_push(const Tensor& z_adv, const AnchorPair& anchor, const ObjectiveConfig& cfg);
double loss_pull(const Tensor& z_adv, const AnchorPair& anchor, const ObjectiveConfig& cfg);
double loss_total(const Tensor& z_adv, const AnchorPair& anchor, const ObjectiveConfig& cfg);

}  // namespace featshield
