#include "featshield/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "featshield/random.hpp"

namespace featshield {

void SyntheticIdentityConfig::validate() const {
    if (identities < 1) throw Error("SyntheticIdentityConfig: at least one identity required");
    if (train_per_identity < 1 || train_per_identity >= images_per_identity) {
        throw Error("SyntheticIdentityConfig: need >= 1 train and >= 1 test image per identity");
    }
    if (image_size < 1) throw Error("SyntheticIdentityConfig: image size must be positive");
    if (!(variation >= 0.0)) throw Error("SyntheticIdentityConfig: variation must be >= 0");
    if (!(color_spread > 0.0 && color_spread <= 0.5)) {
        throw Error("SyntheticIdentityConfig: color spread must lie in (0, 0.5]");
    }
    if (!(texture_amplitude >= 0.0 && texture_amplitude <= 0.25)) {
        throw Error("SyntheticIdentityConfig: texture amplitude must lie in [0, 0.25]");
    }
}

IdentitySignature make_signature(std::uint64_t seed, std::size_t identity, double color_spread,
                                 double texture_amplitude) {
    Rng rng(derive_seed(seed, 1000 + identity));
    IdentitySignature sig{};
    for (double& c : sig.base) c = 0.5 + rng.uniform(-color_spread, color_spread);
    for (int w = 0; w < 2; ++w) {
        const double angle = rng.uniform(0.0, std::numbers::pi);
        const double freq = rng.uniform(0.15, 0.6);
        sig.wave_freq[w][0] = freq * std::cos(angle);
        sig.wave_freq[w][1] = freq * std::sin(angle);
        for (double& c : sig.wave_color[w]) c = rng.uniform(-texture_amplitude, texture_amplitude);
    }
    return sig;
}

Image render_identity_image(const IdentitySignature& sig, std::size_t size, double variation,
                            std::uint64_t image_seed) {
    Rng rng(image_seed);
    const double shift_x = rng.uniform(-4.0, 4.0) * variation;
    const double shift_y = rng.uniform(-4.0, 4.0) * variation;
    const double brightness = 1.0 + rng.normal(0.0, 0.05 * variation);
    const double noise = 0.02 * variation;
    Image img(size, size);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double px = static_cast<double>(x) + shift_x;
            const double py = static_cast<double>(y) + shift_y;
            double wave[2];
            for (int w = 0; w < 2; ++w) wave[w] = std::sin(sig.wave_freq[w][0] * px + sig.wave_freq[w][1] * py);
            for (std::size_t c = 0; c < 3; ++c) {
                double v = sig.base[c] + sig.wave_color[0][c] * wave[0] + sig.wave_color[1][c] * wave[1];
                v = v * brightness + rng.normal(0.0, noise);
                img.at(y, x, c) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return img;
}

}  // namespace featshield
