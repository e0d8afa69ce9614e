#include "featshield/pgd.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "featshield/random.hpp"

namespace featshield {

void PgdConfig::validate() const {
    if (!(epsilon > 0.0)) throw Error("PgdConfig: epsilon must be > 0");
    if (!(step >= 0.0 && step <= epsilon)) throw Error("PgdConfig: step must lie in [0, epsilon]");
    if (iterations < 1) throw Error("PgdConfig: iterations must be >= 1");
    if (!(init_sigma >= 0.0)) throw Error("PgdConfig: init sigma must be >= 0");
    if (trace_every < 1) throw Error("PgdConfig: trace_every must be >= 1");
    eot.validate();
}

Image project_linf(const Image& x_prime, const Image& x, double epsilon) {
    require_same_shape("project_linf", x_prime.pixels().shape(), x.pixels().shape());
    Tensor out(x.pixels().shape());
    const auto& xp = x_prime.pixels();
    const auto& xo = x.pixels();
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = std::clamp(xp[i], xo[i] - epsilon, xo[i] + epsilon);
        v = std::clamp(v, 0.0, 1.0);
        // x +- eps rounds; step back toward x until the difference itself is within eps.
        while (std::abs(v - xo[i]) > epsilon) v = std::nextafter(v, xo[i]);
        out[i] = v;
    }
    return Image(std::move(out));
}

Image init_perturbed(const Image& x, const PgdConfig& cfg) {
    if (cfg.init_sigma == 0.0) return x;
    Rng rng(derive_seed(cfg.seed, 0xC0FFEE));
    Tensor noisy = x.pixels();
    for (auto& v : noisy.values()) v = std::clamp(v + rng.normal(0.0, cfg.init_sigma), 0.0, 1.0);
    return project_linf(Image(std::move(noisy)), x, cfg.epsilon);
}

LossGradient loss_gradient(const Image& x_k, const AnchorPair& anchor, const EncoderParams& params,
                           const ObjectiveConfig& obj, const std::vector<TransformSpec>& transforms) {
    Tape tape;
    Var input = tape.variable(x_k.pixels());
    Var z = embed(params, apply_transforms(transforms, input));
    Var loss = loss_total(z, anchor, obj);
    tape.backward(loss);
    return {loss.value()[0], tape.grad(input)};
}

namespace {

double sign(double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

bool feasible(const Image& x_k, const Image& x, double epsilon) {
    const auto& a = x_k.pixels();
    const auto& b = x.pixels();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::abs(a[i] - b[i]) > epsilon || a[i] < 0.0 || a[i] > 1.0) return false;
    }
    return true;
}

}  // namespace

Image pgd_step(const Image& x_k, const Image& x, const AnchorPair& anchor, const EncoderParams& params,
               const ObjectiveConfig& obj, const PgdConfig& cfg, std::size_t iteration) {
    const auto transforms = sample_transforms(cfg.eot, iteration);
    LossGradient lg;
    try {
        lg = loss_gradient(x_k, anchor, params, obj, transforms);
    } catch (const Error& e) {
        throw Error("pgd_step: iteration " + std::to_string(iteration) + ": " + e.what());
    }
    if (!lg.grad.all_finite() || !std::isfinite(lg.loss)) {
        throw Error("pgd_step: non-finite gradient at iteration " + std::to_string(iteration));
    }
    Tensor stepped = x_k.pixels();
    for (std::size_t i = 0; i < stepped.size(); ++i) stepped[i] -= cfg.step * sign(lg.grad[i]);
    // Stepped values may leave [0,1]; project before wrapping as an Image.
    Tensor projected(stepped.shape());
    const auto& xo = x.pixels();
    for (std::size_t i = 0; i < projected.size(); ++i) {
        projected[i] = std::clamp(stepped[i], std::max(0.0, xo[i] - cfg.epsilon), std::min(1.0, xo[i] + cfg.epsilon));
    }
    return project_linf(Image(std::move(projected)), x, cfg.epsilon);
}

ProtectionResult protect_image(const Image& x, const EncoderParams& params, const ObjectiveConfig& obj,
                               const PgdConfig& cfg) {
    obj.validate();
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    const AnchorPair anchor = make_anchor(params, x);

    ProtectionResult res;
    Image current = init_perturbed(x, cfg);
    auto evaluate = [&](const Image& img, std::size_t iteration) {
        const Tensor z = embed(params, img);
        TracePoint tp{iteration, loss_total(z, anchor, obj), cos_sim(z, anchor.z_base)};
        return tp;
    };
    const auto first = evaluate(current, 0);
    res.initial_loss = first.loss;
    res.initial_cos_base = first.cos_base;
    res.trace.push_back(first);
    if (!feasible(current, x, cfg.epsilon)) ++res.feasibility_violations;

    for (std::size_t k = 0; k < cfg.iterations; ++k) {
        current = pgd_step(current, x, anchor, params, obj, cfg, k);
        if (!feasible(current, x, cfg.epsilon)) ++res.feasibility_violations;
        const std::size_t done = k + 1;
        if (done % cfg.trace_every == 0 || done == cfg.iterations) res.trace.push_back(evaluate(current, done));
    }

    const Tensor z = embed(params, current);
    res.final_loss = res.trace.back().loss;
    res.final_cos_base = res.trace.back().cos_base;
    res.final_cos_target = cos_sim(z, anchor.z_target);
    res.linf = linf_distance(current, x);
    res.protected_image = std::move(current);
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

}  // namespace featshield
