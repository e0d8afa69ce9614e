#include "featshield/encoder.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "featshield/random.hpp"

namespace featshield {

void EncoderConfig::validate() const {
    if (patch_size == 0 || image_size % patch_size != 0) {
        throw Error("EncoderConfig: image size " + std::to_string(image_size) + " is not a multiple of patch size " +
                    std::to_string(patch_size));
    }
    if (image_size < patch_size) throw Error("EncoderConfig: image smaller than one patch");
    if (encoder_width < 2 || projector_width < 2) throw Error("EncoderConfig: widths must be >= 2");
    for (double s : pixel_std) {
        if (!(s > 0.0)) throw Error("EncoderConfig: pixel std must be > 0");
    }
}

EncoderConfig EncoderConfig::unnormalized() {
    EncoderConfig c;
    c.pixel_mean = {0.0, 0.0, 0.0};
    c.pixel_std = {1.0, 1.0, 1.0};
    return c;
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

EncoderParams init_encoder(const EncoderConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const auto in = static_cast<double>(cfg.patch_dim());
    const auto hid = static_cast<double>(cfg.encoder_width);
    const auto out = static_cast<double>(cfg.projector_width);
    EncoderParams p;
    p.config = cfg;
    p.patch_weight = uniform_tensor({cfg.patch_dim(), cfg.encoder_width}, std::sqrt(6.0 / (in + hid)), rng);
    p.patch_bias = uniform_tensor({cfg.encoder_width}, 1.0 / std::sqrt(in), rng);
    p.proj_weight = uniform_tensor({cfg.encoder_width, cfg.projector_width}, std::sqrt(6.0 / (hid + out)), rng);
    p.proj_bias = uniform_tensor({cfg.projector_width}, 1.0 / std::sqrt(hid), rng);
    return p;
}

Var encode_tokens(const EncoderParams& params, Var image) {
    const auto& cfg = params.config;
    const Shape expected{cfg.image_size, cfg.image_size, Image::kChannels};
    if (image.shape() != expected) {
        throw Error("embed: image shape " + shape_str(image.shape()) + " does not match encoder input " +
                    shape_str(expected));
    }
    Tape& tape = image.tape();
    Var normalized = image;
    const bool identity_norm = cfg.pixel_mean == std::array<double, 3>{0.0, 0.0, 0.0} &&
                               cfg.pixel_std == std::array<double, 3>{1.0, 1.0, 1.0};
    if (!identity_norm) {
        Tensor gain(expected), offset(expected);
        for (std::size_t i = 0; i < gain.size(); ++i) {
            const std::size_t c = i % Image::kChannels;
            gain[i] = 1.0 / cfg.pixel_std[c];
            offset[i] = -cfg.pixel_mean[c] / cfg.pixel_std[c];
        }
        normalized = ops::add_const(ops::mask_mul(image, gain), offset);
    }
    Var patches = ops::patchify(normalized, cfg.patch_size);
    Var w = tape.constant(params.patch_weight);
    Var b = tape.constant(params.patch_bias);
    return ops::tanh(ops::add_row_bias(ops::matmul(patches, w), b));
}

Var embed(const EncoderParams& params, Var image) {
    Tape& tape = image.tape();
    Var hidden = encode_tokens(params, image);
    Var w = tape.constant(params.proj_weight);
    Var b = tape.constant(params.proj_bias);
    return ops::add_row_bias(ops::matmul(hidden, w), b);
}

Tensor embed(const EncoderParams& params, const Image& image) {
    Tape tape;
    return embed(params, tape.constant(image.pixels())).value();
}

Tensor pooled_unit_embedding(const Tensor& z) {
    if (z.rank() != 2) throw Error("pooled_unit_embedding: expected [L,D], got " + shape_str(z.shape()));
    const std::size_t L = z.dim(0), D = z.dim(1);
    Tensor pooled({D}, 0.0);
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < D; ++j) pooled[j] += z[i * D + j];
    double norm = 0.0;
    for (auto& v : pooled.values()) {
        v /= static_cast<double>(L);
        norm += v * v;
    }
    norm = std::sqrt(norm);
    // Token means below this are cancellation noise, not a direction.
    if (!(norm > 1e-12)) throw Error("pooled_unit_embedding: degenerate (zero) pooled embedding");
    for (auto& v : pooled.values()) v /= norm;
    return pooled;
}

namespace {

nlohmann::json config_json(const EncoderConfig& c) {
    return {{"image_size", c.image_size},
            {"patch_size", c.patch_size},
            {"encoder_width", c.encoder_width},
            {"projector_width", c.projector_width},
            {"seed", c.seed},
            {"pixel_mean", c.pixel_mean},
            {"pixel_std", c.pixel_std}};
}

Tensor tensor_from(const nlohmann::json& j, Shape shape) {
    return Tensor(std::move(shape), j.get<std::vector<double>>());
}

}  // namespace

void save_encoder(const EncoderParams& params, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format"] = "featshield-encoder-v1";
    j["config"] = config_json(params.config);
    j["patch_weight"] = params.patch_weight.values();
    j["patch_bias"] = params.patch_bias.values();
    j["proj_weight"] = params.proj_weight.values();
    j["proj_bias"] = params.proj_bias.values();
    std::ofstream out(path);
    if (!out) throw Error("save_encoder: cannot open " + path.string());
    out << j.dump() << '\n';
}

EncoderParams load_encoder(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("load_encoder: cannot open " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        if (j.at("format") != "featshield-encoder-v1") throw Error("load_encoder: unknown format in " + path.string());
        const auto& c = j.at("config");
        EncoderParams p;
        p.config.image_size = c.at("image_size");
        p.config.patch_size = c.at("patch_size");
        p.config.encoder_width = c.at("encoder_width");
        p.config.projector_width = c.at("projector_width");
        p.config.seed = c.at("seed");
        p.config.pixel_mean = c.at("pixel_mean");
        p.config.pixel_std = c.at("pixel_std");
        p.config.validate();
        const auto& cfg = p.config;
        p.patch_weight = tensor_from(j.at("patch_weight"), {cfg.patch_dim(), cfg.encoder_width});
        p.patch_bias = tensor_from(j.at("patch_bias"), {cfg.encoder_width});
        p.proj_weight = tensor_from(j.at("proj_weight"), {cfg.encoder_width, cfg.projector_width});
        p.proj_bias = tensor_from(j.at("proj_bias"), {cfg.projector_width});
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw Error("load_encoder: malformed file " + path.string() + ": " + e.what());
    }
}

}  // namespace featshield
