#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "featshield/autodiff.hpp"
#include "featshield/image.hpp"

namespace featshield {

/// Geometry and seed of the reference patch encoder.
struct EncoderConfig {
    std::size_t image_size = 32;
    std::size_t patch_size = 8;
    std::size_t encoder_width = 32;
    std::size_t projector_width = 16;
    std::uint64_t seed = 0;
    /// Per-channel input normalization (x - mean) / std applied before patching.
    /// Defaults are the CLIP preprocessing statistics.
    std::array<double, 3> pixel_mean{0.48145466, 0.4578275, 0.40821073};
    std::array<double, 3> pixel_std{0.26862954, 0.26130258, 0.27577711};

    /// Geometry defaults with normalization disabled (mean 0, std 1).
    static EncoderConfig unnormalized();

    std::size_t tokens() const { return (image_size / patch_size) * (image_size / patch_size); }
    std::size_t patch_dim() const { return patch_size * patch_size * Image::kChannels; }
    void validate() const;

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Frozen weights of the patch encoder (normalize, patch linear, tanh) and the projector (linear).
struct EncoderParams {
    EncoderConfig config;
    Tensor patch_weight;  // [3P^2, encoder_width]
    Tensor patch_bias;    // [encoder_width]
    Tensor proj_weight;   // [encoder_width, projector_width]
    Tensor proj_bias;     // [projector_width]

    friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

/// Weights ~ U(+-sqrt(6/(fan_in+fan_out))), biases ~ U(+-1/sqrt(fan_in)), all from cfg.seed.
EncoderParams init_encoder(const EncoderConfig& cfg);

/// Token features before the projector: tanh(patches(normalize(x)) * W + b), shape [L, encoder_width].
Var encode_tokens(const EncoderParams& params, Var image);
/// Projected representation z = projector(encode_tokens(image)), shape [L, D].
Var embed(const EncoderParams& params, Var image);
/// Non-differentiable convenience wrapper.
Tensor embed(const EncoderParams& params, const Image& image);

/// Token mean of z, l2-normalized. Throws on a zero pooled vector.
Tensor pooled_unit_embedding(const Tensor& z);

/// JSON export with the config echoed in the header; doubles round-trip exactly.
void save_encoder(const EncoderParams& params, const std::filesystem::path& path);
EncoderParams load_encoder(const std::filesystem::path& path);

}  // namespace featshield
