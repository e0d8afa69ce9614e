#pragma once

#include <cstdint>
#include <filesystem>

#include "featshield/image.hpp"

namespace featshield {

/// Shape of the synthetic identity corpus.
struct SyntheticIdentityConfig {
    std::size_t identities = 10;
    std::size_t images_per_identity = 25;
    std::size_t train_per_identity = 20;
    std::size_t image_size = 32;
    /// Scale of per-image nuisance (pattern shift, brightness, pixel noise) relative to defaults.
    double variation = 1.0;
    /// Base colours are drawn from 0.5 +- color_spread per channel.
    double color_spread = 0.07;
    /// Per-channel amplitude bound of the two texture waves.
    double texture_amplitude = 0.01;

    void validate() const;
};

/// Identity signature: base colour plus two oriented colour waves.
struct IdentitySignature {
    double base[3];
    double wave_freq[2][2];  // (fx, fy) per wave, radians per pixel
    double wave_color[2][3];
};

IdentitySignature make_signature(std::uint64_t seed, std::size_t identity, double color_spread = 0.07,
                                 double texture_amplitude = 0.01);

/// One image of `identity`: the signature rendered with a seeded shift,
/// brightness change and pixel noise.
Image render_identity_image(const IdentitySignature& sig, std::size_t size, double variation, std::uint64_t image_seed);

}  // namespace featshield
