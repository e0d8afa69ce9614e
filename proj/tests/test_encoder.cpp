#include <doctest.h>

#include <cmath>

#include "featshield/encoder.hpp"
#include "helpers.hpp"

using namespace featshield;
using testing::grad_check;
using testing::random_image;
using testing::random_tensor;
using testing::TempDir;

TEST_SUITE("reference_encoder") {

TEST_CASE("config validation") {
    EncoderConfig c;
    c.image_size = 30;
    CHECK_THROWS_AS(c.validate(), Error);
    c = EncoderConfig{};
    c.projector_width = 1;
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK(EncoderConfig{}.tokens() == 16);
    CHECK(EncoderConfig{}.patch_dim() == 192);
}

TEST_CASE("init is deterministic and seed dependent") {
    EncoderConfig c;
    CHECK(init_encoder(c) == init_encoder(c));
    EncoderConfig c1 = c;
    c1.seed = 1;
    CHECK_FALSE(init_encoder(c).patch_weight == init_encoder(c1).patch_weight);
}

TEST_CASE("patch weights respect the fan bound") {
    const auto p = init_encoder(EncoderConfig{});
    const double bound = std::sqrt(6.0 / (192.0 + 32.0));
    CHECK(bound == doctest::Approx(0.1637).epsilon(1e-3));
    for (double w : p.patch_weight.values()) CHECK(std::abs(w) <= bound);
}

TEST_CASE("zero image gives identical token rows") {
    const auto p = init_encoder(EncoderConfig::unnormalized());
    const Tensor z = embed(p, Image(32, 32, 0.0));
    const std::size_t d = p.config.projector_width, de = p.config.encoder_width;
    CHECK(z.dim(0) == 16);
    CHECK(z.dim(1) == d);
    for (std::size_t j = 0; j < d; ++j) {
        double expect = p.proj_bias[j];
        for (std::size_t k = 0; k < de; ++k) expect += std::tanh(p.patch_bias[k]) * p.proj_weight[k * d + j];
        for (std::size_t r = 0; r < 16; ++r) CHECK(z[r * d + j] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("embed is deterministic and checks size") {
    const auto p = init_encoder(EncoderConfig{});
    const Image x = random_image(32, 32, 4);
    CHECK(embed(p, x) == embed(p, x));
    CHECK_THROWS_AS(embed(p, Image(16, 16)), Error);
}

TEST_CASE("d(sum z)/d(pixels) matches finite differences") {
    EncoderConfig c;
    c.image_size = 8;
    c.patch_size = 4;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        c.seed = seed;
        const auto p = init_encoder(c);
        const Tensor x = random_image(8, 8, seed + 10).pixels();
        CHECK(grad_check([&](Var v) { return ops::sum(embed(p, v)); }, x) <= 1e-4);
    }
}

TEST_CASE("pooled unit embedding") {
    const Tensor rows = Tensor::matrix(3, 2, {3, 4, 3, 4, 3, 4});
    const Tensor u = pooled_unit_embedding(rows);
    CHECK(u[0] == doctest::Approx(0.6));
    CHECK(u[1] == doctest::Approx(0.8));
    CHECK_THROWS_AS(pooled_unit_embedding(Tensor::matrix(2, 2, {1, -2, -1, 2})), Error);
    const Tensor r = pooled_unit_embedding(random_tensor({16, 16}, 9));
    double n = 0.0;
    for (double v : r.values()) n += v * v;
    CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-12);
}

TEST_CASE("halving the perturbation never more than doubles the embedding change") {
    const auto p = init_encoder(EncoderConfig{});
    const Image x = random_image(32, 32, 5);
    const Tensor z0 = embed(p, x);
    Tensor delta = random_tensor({32, 32, 3}, 6, -8.0 / 255.0, 8.0 / 255.0);
    double prev = -1.0;
    for (int k = 0; k < 6; ++k) {
        Tensor xp = x.pixels();
        for (std::size_t i = 0; i < xp.size(); ++i) xp[i] = std::clamp(xp[i] + delta[i], 0.0, 1.0);
        const Tensor z = embed(p, Image(xp));
        double n = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) n += (z[i] - z0[i]) * (z[i] - z0[i]);
        n = std::sqrt(n);
        CHECK(std::isfinite(n));
        if (prev >= 0.0) CHECK(n <= 2.0 * prev);
        prev = n;
        for (auto& v : delta.values()) v *= 0.5;
    }
}

TEST_CASE("weights file round trip") {
    TempDir dir("encoder_io");
    EncoderConfig c;
    c.seed = 42;
    const auto p = init_encoder(c);
    save_encoder(p, dir / "enc.json");
    CHECK(load_encoder(dir / "enc.json") == p);
}

}
