#include "featshield/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace featshield {
namespace {

std::uint8_t to_byte(double p) {
    return static_cast<std::uint8_t>(std::clamp(std::floor(p * 255.0 + 0.5), 0.0, 255.0));
}

std::string lower_ext(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

Image from_bytes(std::size_t height, std::size_t width, const std::vector<std::uint8_t>& bytes) {
    Tensor t({height, width, Image::kChannels});
    for (std::size_t i = 0; i < bytes.size(); ++i) t[i] = bytes[i] / 255.0;
    return Image(std::move(t));
}

std::vector<std::uint8_t> to_bytes(const Image& img) {
    std::vector<std::uint8_t> bytes(img.pixels().size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(img.pixels()[i]);
    return bytes;
}

Image load_png(const std::filesystem::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw Error("load_image: cannot decode PNG " + path.string() + ": " + png.message);
    }
    const bool rgb = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
    const bool alpha = (png.format & PNG_FORMAT_FLAG_ALPHA) != 0;
    const bool wide = (png.format & PNG_FORMAT_FLAG_LINEAR) != 0;
    if (!rgb || alpha || wide) {
        png_image_free(&png);
        throw Error("load_image: " + path.string() + " is not 8-bit RGB without alpha");
    }
    png.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw Error("load_image: cannot decode PNG " + path.string() + ": " + msg);
    }
    return from_bytes(png.height, png.width, bytes);
}

void save_png(const Image& img, const std::filesystem::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width());
    png.height = static_cast<png_uint_32>(img.height());
    png.format = PNG_FORMAT_RGB;
    auto bytes = to_bytes(img);
    if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr)) {
        throw Error("save_image: cannot write " + path.string() + ": " + png.message);
    }
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
    std::string tok;
    while (in) {
        const int c = in.get();
        if (c == EOF) break;
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

Image load_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_image: cannot open " + path.string());
    if (ppm_token(in) != "P6") throw Error("load_image: " + path.string() + " is not a binary RGB PPM (P6)");
    std::size_t width = 0, height = 0, maxval = 0;
    try {
        width = std::stoul(ppm_token(in));
        height = std::stoul(ppm_token(in));
        maxval = std::stoul(ppm_token(in));
    } catch (const std::exception&) {
        throw Error("load_image: malformed PPM header in " + path.string());
    }
    if (maxval != 255 || width == 0 || height == 0) {
        throw Error("load_image: unsupported PPM geometry or maxval in " + path.string());
    }
    std::vector<std::uint8_t> bytes(width * height * Image::kChannels);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw Error("load_image: truncated PPM data in " + path.string());
    }
    return from_bytes(height, width, bytes);
}

void save_ppm(const Image& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_image: cannot open " + path.string());
    out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
    auto bytes = to_bytes(img);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("save_image: write failed for " + path.string());
}

}  // namespace

Image::Image(std::size_t height, std::size_t width, double fill) : pixels_({height, width, kChannels}, fill) {
    if (fill < 0.0 || fill > 1.0) throw Error("Image: fill value outside [0,1]");
}

Image::Image(Tensor pixels) : pixels_(std::move(pixels)) {
    if (pixels_.rank() != 3 || pixels_.dim(2) != kChannels) {
        throw Error("Image: expected [H,W,3] pixels, got " + shape_str(pixels_.shape()));
    }
    for (double v : pixels_.values()) {
        if (!(v >= 0.0 && v <= 1.0)) throw Error("Image: pixel value " + std::to_string(v) + " outside [0,1]");
    }
}

Perturbation Perturbation::between(const Image& original, const Image& perturbed, double epsilon) {
    require_same_shape("Perturbation", original.pixels().shape(), perturbed.pixels().shape());
    Tensor delta(original.pixels().shape());
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = perturbed.pixels()[i] - original.pixels()[i];
    return {std::move(delta), epsilon};
}

double Perturbation::linf() const {
    double m = 0.0;
    for (double v : delta.values()) m = std::max(m, std::abs(v));
    return m;
}

Image load_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error("load_image: no such file " + path.string());
    const auto ext = lower_ext(path);
    if (ext == ".ppm") return load_ppm(path);
    if (ext == ".png") return load_png(path);
    throw Error("load_image: unsupported extension for " + path.string());
}

void save_image(const Image& img, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto ext = lower_ext(path);
    if (ext == ".ppm") return save_ppm(img, path);
    if (ext == ".png") return save_png(img, path);
    throw Error("save_image: unsupported extension for " + path.string());
}

Image quantize_8bit(const Image& img) {
    Tensor t(img.pixels().shape());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = to_byte(img.pixels()[i]) / 255.0;
    return Image(std::move(t));
}

double linf_distance(const Image& a, const Image& b) { return max_abs_diff(a.pixels(), b.pixels()); }

std::optional<double> psnr(const Image& a, const Image& b) {
    require_same_shape("psnr", a.pixels().shape(), b.pixels().shape());
    double mse = 0.0;
    for (std::size_t i = 0; i < a.pixels().size(); ++i) {
        const double d = a.pixels()[i] - b.pixels()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.pixels().size());
    if (mse == 0.0) return std::nullopt;
    return 10.0 * std::log10(1.0 / mse);
}

}  // namespace featshield
