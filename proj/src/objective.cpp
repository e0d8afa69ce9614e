#include "featshield/objective.hpp"

#include <cmath>

namespace featshield {

void ObjectiveConfig::validate() const {
    if (!(alpha > 0.0)) throw Error("ObjectiveConfig: alpha must be > 0");
    if (!(beta >= 0.0)) throw Error("ObjectiveConfig: beta must be >= 0");
    if (!(xi > 0.0 && xi < 1e-3)) throw Error("ObjectiveConfig: xi must lie in (0, 1e-3)");
}

double cos_sim(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error("cos_sim: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw Error("cos_sim: zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double cos_sim(const Tensor& a, const Tensor& b) {
    require_same_shape("cos_sim", a.shape(), b.shape());
    return cos_sim(a.data(), b.data());
}

Var cos_sim(Var a, const Tensor& constant) {
    require_same_shape("cos_sim", a.shape(), constant.shape());
    double nb = 0.0;
    for (double v : constant.values()) nb += v * v;
    if (nb == 0.0) throw Error("cos_sim: zero vector");
    Var norm_a = ops::l2norm(a);
    if (norm_a.value()[0] == 0.0) throw Error("cos_sim: zero vector");
    Var dot = ops::sum(ops::mask_mul(a, constant));
    return ops::scale(ops::div(dot, norm_a), 1.0 / std::sqrt(nb));
}

AnchorPair make_anchor(const Tensor& z_base) {
    double norm = 0.0;
    for (double v : z_base.values()) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw Error("make_anchor: clean embedding is all zeros");
    Tensor target(z_base.shape());
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = -z_base[i] / norm;
    return {z_base, std::move(target)};
}

AnchorPair make_anchor(const EncoderParams& params, const Image& x) { return make_anchor(embed(params, x)); }

Var loss_push(Var z_adv, const AnchorPair& anchor, const ObjectiveConfig& cfg) {
    return ops::exp(ops::scale(cos_sim(z_adv, anchor.z_base), cfg.alpha));
}

Var loss_pull(Var z_adv, const AnchorPair& anchor, const ObjectiveConfig& cfg) {
    Var c = cos_sim(z_adv, anchor.z_target);
    Var arg = ops::add_scalar(ops::scale(ops::add_scalar(c, 1.0), 0.5), cfg.xi);
    return ops::scale(ops::log(arg), -1.0);
}

Var loss_total(Var z_adv, const AnchorPair& anchor, const ObjectiveConfig& cfg) {
    Var push = loss_push(z_adv, anchor, cfg);
    if (cfg.beta == 0.0) return push;
    return ops::add(push, ops::scale(loss_pull(z_adv, anchor, cfg), cfg.beta));
}

double loss_push(const Tensor& z_adv, const AnchorPair& anchor, const ObjectiveConfig& cfg) {
    return std::exp(cfg.alpha * cos_sim(z_adv, anchor.z_base));
}

double loss_pull(const Tensor& z_adv, const AnchorPair& anchor, const ObjectiveConfig& cfg) {
    return -std::log((cos_sim(z_adv, anchor.z_target) + 1.0) / 2.0 + cfg.xi);
}

double loss_total(const Tensor& z_adv, const AnchorPair& anchor, const ObjectiveConfig& cfg) {
    const double push = loss_push(z_adv, anchor, cfg);
    if (cfg.beta == 0.0) return push;
    return push + cfg.beta * loss_pull(z_adv, anchor, cfg);
}

}  // namespace featshield
