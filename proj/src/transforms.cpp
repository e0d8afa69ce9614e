#include "featshield/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "featshield/random.hpp"

namespace featshield {

std::string to_string(TransformKind kind) {
    switch (kind) {
        case TransformKind::identity: return "identity";
        case TransformKind::gaussian_blur: return "gaussian_blur";
        case TransformKind::gaussian_noise: return "gaussian_noise";
        case TransformKind::resize_restore: return "resize_restore";
        case TransformKind::crop_restore: return "crop_restore";
        case TransformKind::occlusion: return "occlusion";
    }
    throw Error("unknown transform kind");
}

TransformKind transform_kind_from_string(const std::string& name) {
    for (auto k : {TransformKind::identity, TransformKind::gaussian_blur, TransformKind::gaussian_noise,
                   TransformKind::resize_restore, TransformKind::crop_restore, TransformKind::occlusion}) {
        if (to_string(k) == name) return k;
    }
    throw Error("unknown transform kind '" + name + "'");
}

TransformSpec TransformSpec::identity() { return TransformSpec(); }

TransformSpec TransformSpec::gaussian_blur(std::size_t kernel, double sigma) {
    if (kernel < 3 || kernel % 2 == 0) throw Error("gaussian_blur: kernel must be odd and >= 3");
    if (!std::isfinite(sigma)) throw Error("gaussian_blur: sigma must be finite");
    TransformSpec s;
    s.kind_ = TransformKind::gaussian_blur;
    s.kernel_ = kernel;
    s.sigma_ = sigma > 0.0 ? sigma : static_cast<double>(kernel) / 3.0;
    return s;
}

TransformSpec TransformSpec::gaussian_noise(double sigma_255, std::uint64_t seed) {
    if (!(sigma_255 >= 0.0) || !std::isfinite(sigma_255)) throw Error("gaussian_noise: sigma must be >= 0");
    TransformSpec s;
    s.kind_ = TransformKind::gaussian_noise;
    s.sigma_ = sigma_255;
    s.seed_ = seed;
    return s;
}

TransformSpec TransformSpec::resize_restore(double scale) {
    if (!(scale > 0.5 && scale <= 1.5)) throw Error("resize_restore: scale must lie in (0.5, 1.5]");
    TransformSpec s;
    s.kind_ = TransformKind::resize_restore;
    s.amount_ = scale;
    return s;
}

TransformSpec TransformSpec::crop_restore(double fraction, std::uint64_t seed) {
    if (!(fraction > 0.5 && fraction <= 1.0)) throw Error("crop_restore: fraction must lie in (0.5, 1]");
    TransformSpec s;
    s.kind_ = TransformKind::crop_restore;
    s.amount_ = fraction;
    s.seed_ = seed;
    return s;
}

TransformSpec TransformSpec::occlusion(double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 0.25)) throw Error("occlusion: fraction must lie in (0, 0.25]");
    TransformSpec s;
    s.kind_ = TransformKind::occlusion;
    s.amount_ = fraction;
    s.seed_ = seed;
    return s;
}

TransformSpec TransformSpec::with_seed(std::uint64_t seed) const {
    TransformSpec s = *this;
    s.seed_ = seed;
    return s;
}

namespace {

std::string fmt_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

}  // namespace

std::string TransformSpec::label() const {
    switch (kind_) {
        case TransformKind::identity: return "identity";
        case TransformKind::gaussian_blur: {
            std::string l = "blur" + std::to_string(kernel_);
            if (std::abs(sigma_ - static_cast<double>(kernel_) / 3.0) > 1e-12) l += "_s" + fmt_num(sigma_);
            return l;
        }
        case TransformKind::gaussian_noise: return "noise" + fmt_num(sigma_);
        case TransformKind::resize_restore: return "resize" + fmt_num(amount_);
        case TransformKind::crop_restore: return "crop" + fmt_num(amount_);
        case TransformKind::occlusion: return "occlusion" + fmt_num(amount_);
    }
    return "?";
}

TransformSpec parse_transform(const std::string& label) {
    auto number = [&](std::size_t prefix) {
        const std::string rest = label.substr(prefix);
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(rest, &used);
        } catch (const std::exception&) {
            throw Error("parse_transform: bad number in '" + label + "'");
        }
        return std::pair{v, rest.substr(used)};
    };
    auto starts = [&](const char* p) { return label.rfind(p, 0) == 0; };
    if (label == "identity") return TransformSpec::identity();
    if (starts("blur")) {
        auto [k, rest] = number(4);
        double sigma = 0.0;
        if (rest.rfind("_s", 0) == 0) {
            sigma = std::stod(rest.substr(2));
        } else if (!rest.empty()) {
            throw Error("parse_transform: bad blur label '" + label + "'");
        }
        return TransformSpec::gaussian_blur(static_cast<std::size_t>(k), sigma);
    }
    auto plain = [&](std::size_t prefix) {
        auto [v, rest] = number(prefix);
        if (!rest.empty()) throw Error("parse_transform: trailing characters in '" + label + "'");
        return v;
    };
    if (starts("noise")) return TransformSpec::gaussian_noise(plain(5));
    if (starts("resize")) return TransformSpec::resize_restore(plain(6));
    if (starts("crop")) return TransformSpec::crop_restore(plain(4));
    if (starts("occlusion")) return TransformSpec::occlusion(plain(9));
    throw Error("parse_transform: unknown transform '" + label + "'");
}

Tensor TransformSpec::blur_kernel() const {
    if (kind_ != TransformKind::gaussian_blur) return {};
    const auto k = kernel_;
    const double c = static_cast<double>(k / 2);
    Tensor kern({k, k});
    double total = 0.0;
    for (std::size_t y = 0; y < k; ++y)
        for (std::size_t x = 0; x < k; ++x) {
            const double dy = static_cast<double>(y) - c, dx = static_cast<double>(x) - c;
            kern[y * k + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_ * sigma_));
            total += kern[y * k + x];
        }
    for (auto& v : kern.values()) v /= total;
    return kern;
}

Var apply_transform(const TransformSpec& spec, Var image) {
    if (image.shape().size() != 3) throw Error("apply_transform: expected [H,W,C] image, got " + shape_str(image.shape()));
    const std::size_t H = image.shape()[0], W = image.shape()[1];
    Var out;
    switch (spec.kind()) {
        case TransformKind::identity: return image;
        case TransformKind::gaussian_blur: out = ops::conv2d_fixed(image, spec.blur_kernel()); break;
        case TransformKind::gaussian_noise: {
            Rng rng(spec.seed());
            Tensor noise(image.shape());
            const double s = spec.sigma() / 255.0;
            for (auto& v : noise.values()) v = s * rng.normal();
            out = ops::add_const(image, noise);
            break;
        }
        case TransformKind::resize_restore: {
            const auto h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(spec.amount() * H)));
            const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(spec.amount() * W)));
            out = ops::resize_bilinear(ops::resize_bilinear(image, h, w), H, W);
            break;
        }
        case TransformKind::crop_restore: {
            Rng rng(spec.seed());
            const auto h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(spec.amount() * H)));
            const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(spec.amount() * W)));
            const auto top = static_cast<std::size_t>(rng.below(H - h + 1));
            const auto left = static_cast<std::size_t>(rng.below(W - w + 1));
            out = ops::pad2d(ops::slice2d(image, top, left, h, w), top, left, H, W);
            break;
        }
        case TransformKind::occlusion: {
            Rng rng(spec.seed());
            const double side = std::sqrt(spec.amount());
            const auto h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(side * H)));
            const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(side * W)));
            const auto top = static_cast<std::size_t>(rng.below(H - h + 1));
            const auto left = static_cast<std::size_t>(rng.below(W - w + 1));
            Tensor mask(image.shape(), 1.0);
            const std::size_t C = image.shape()[2];
            for (std::size_t y = top; y < top + h; ++y)
                for (std::size_t x = left; x < left + w; ++x)
                    for (std::size_t c = 0; c < C; ++c) mask[(y * W + x) * C + c] = 0.0;
            out = ops::mask_mul(image, mask);
            break;
        }
    }
    return ops::clamp(out, 0.0, 1.0);
}

Image apply_transform(const TransformSpec& spec, const Image& image) {
    Tape tape;
    return Image(apply_transform(spec, tape.constant(image.pixels())).value());
}

Var apply_transforms(const std::vector<TransformSpec>& specs, Var image) {
    for (const auto& s : specs) image = apply_transform(s, image);
    return image;
}

EotPolicy EotPolicy::identity_only() {
    EotPolicy p;
    p.candidates.push_back({TransformSpec::identity(), 1.0});
    return p;
}

EotPolicy EotPolicy::default_policy(std::uint64_t seed) {
    EotPolicy p;
    p.candidates = {{TransformSpec::gaussian_blur(3), 1.0},
                    {TransformSpec::gaussian_noise(5.0), 1.0},
                    {TransformSpec::resize_restore(0.75), 1.0},
                    {TransformSpec::crop_restore(0.9), 1.0},
                    {TransformSpec::occlusion(0.1), 1.0}};
    p.seed = seed;
    return p;
}

void EotPolicy::validate() const {
    if (candidates.empty()) throw Error("EotPolicy: at least one candidate required");
    double total = 0.0;
    for (const auto& c : candidates) {
        if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) throw Error("EotPolicy: weights must be finite and >= 0");
        total += c.weight;
    }
    if (!(total > 0.0)) throw Error("EotPolicy: weights sum to zero");
    if (per_iteration == 0) throw Error("EotPolicy: per_iteration must be >= 1");
}

std::vector<TransformSpec> sample_transforms(const EotPolicy& policy, std::size_t iteration) {
    policy.validate();
    Rng rng(derive_seed(policy.seed, iteration));
    double total = 0.0;
    for (const auto& c : policy.candidates) total += c.weight;
    std::vector<TransformSpec> out;
    out.reserve(policy.per_iteration);
    for (std::size_t i = 0; i < policy.per_iteration; ++i) {
        const double u = rng.uniform() * total;
        double acc = 0.0;
        std::size_t pick = policy.candidates.size() - 1;
        for (std::size_t c = 0; c < policy.candidates.size(); ++c) {
            acc += policy.candidates[c].weight;
            if (u < acc && policy.candidates[c].weight > 0.0) {
                pick = c;
                break;
            }
        }
        out.push_back(policy.candidates[pick].spec.with_seed(rng.engine()()));
    }
    return out;
}

std::vector<TransformSpec> evaluation_suite() {
    return {TransformSpec::gaussian_blur(3),    TransformSpec::gaussian_blur(5),  TransformSpec::gaussian_noise(5.0),
            TransformSpec::gaussian_noise(10.0), TransformSpec::resize_restore(0.75), TransformSpec::crop_restore(0.9),
            TransformSpec::occlusion(0.1)};
}

}  // namespace featshield
