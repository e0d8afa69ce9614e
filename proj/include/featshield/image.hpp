#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>

#include "featshield/tensor.hpp"

namespace featshield {

/// RGB image with pixels in [0,1], stored as an [H,W,3] tensor.
class Image {
public:
    static constexpr std::size_t kChannels = 3;

    Image() = default;
    Image(std::size_t height, std::size_t width, double fill = 0.0);
    /// Takes an [H,W,3] tensor; throws if any value is outside [0,1] or not finite.
    explicit Image(Tensor pixels);

    std::size_t height() const { return pixels_.dim(0); }
    std::size_t width() const { return pixels_.dim(1); }
    const Tensor& pixels() const { return pixels_; }
    Tensor& mutable_pixels() { return pixels_; }

    double& at(std::size_t y, std::size_t x, std::size_t c) { return pixels_[(y * width() + x) * kChannels + c]; }
    double at(std::size_t y, std::size_t x, std::size_t c) const { return pixels_[(y * width() + x) * kChannels + c]; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    Tensor pixels_;
};

/// Additive perturbation with its l-inf budget.
struct Perturbation {
    Tensor delta;
    double epsilon = 0.0;

    static Perturbation between(const Image& original, const Image& perturbed, double epsilon);
    double linf() const;
    bool within_budget(double slack = 0.0) const { return linf() <= epsilon + slack; }
};

/// Reads an 8-bit RGB PNG or binary PPM (P6, maxval 255). Pixel = byte / 255.
Image load_image(const std::filesystem::path& path);
/// Writes PNG or PPM by extension, bytes = floor(255 * p + 0.5).
void save_image(const Image& img, const std::filesystem::path& path);

/// Quantizes through the 8-bit export mapping without touching disk.
Image quantize_8bit(const Image& img);

double linf_distance(const Image& a, const Image& b);
/// Peak signal-to-noise ratio in dB; nullopt for identical images.
std::optional<double> psnr(const Image& a, const Image& b);

}  // namespace featshield
