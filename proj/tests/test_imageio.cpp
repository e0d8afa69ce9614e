#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"

using namespace featshield;
using testing::random_image;
using testing::TempDir;

TEST_SUITE("imageio") {

TEST_CASE("image rejects out-of-range pixels") {
    Tensor t({2, 2, 3}, 0.5);
    t[3] = 1.5;
    CHECK_THROWS_AS(Image{t}, Error);
    t[3] = std::nan("");
    CHECK_THROWS_AS(Image{t}, Error);
    CHECK_THROWS_AS(Image(Tensor({2, 2, 1}, 0.5)), Error);
}

TEST_CASE("png and ppm round trips") {
    TempDir dir("imageio_roundtrip");
    for (const char* ext : {".png", ".ppm"}) {
        CAPTURE(ext);
        save_image(Image(32, 32, 0.0), dir / (std::string("black") + ext));
        CHECK(load_image(dir / (std::string("black") + ext)) == Image(32, 32, 0.0));
        save_image(Image(32, 32, 1.0), dir / (std::string("white") + ext));
        CHECK(load_image(dir / (std::string("white") + ext)) == Image(32, 32, 1.0));

        const Image img = random_image(16, 12, 3);
        const auto path = dir / (std::string("random") + ext);
        save_image(img, path);
        const Image back = load_image(path);
        CHECK(linf_distance(img, back) <= 0.5 / 255.0 + 1e-15);
        save_image(back, path);
        CHECK(load_image(path) == back);
    }
}

TEST_CASE("byte mapping") {
    TempDir dir("imageio_bytes");
    Image img(1, 2, 0.5);
    img.at(0, 1, 0) = 128.0 / 255.0;
    save_image(img, dir / "px.ppm");
    std::ifstream in(dir / "px.ppm", std::ios::binary);
    std::string magic;
    int w, h, maxval;
    in >> magic >> w >> h >> maxval;
    in.get();
    unsigned char bytes[6];
    in.read(reinterpret_cast<char*>(bytes), 6);
    CHECK(bytes[0] == 128);  // 0.5 * 255 = 127.5 rounds half up
    CHECK(bytes[3] == 128);
    const Image back = load_image(dir / "px.ppm");
    CHECK(back.at(0, 1, 0) == 128.0 / 255.0);
    CHECK(back.at(0, 1, 0) == doctest::Approx(0.50196).epsilon(1e-5));
}

TEST_CASE("load errors name the path") {
    TempDir dir("imageio_errors");
    const auto missing = dir / "missing.png";
    try {
        load_image(missing);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("missing.png") != std::string::npos);
    }
    std::ofstream(dir / "bad.ppm") << "P5\n2 2\n255\n";
    CHECK_THROWS_AS(load_image(dir / "bad.ppm"), Error);
    CHECK_THROWS_AS(save_image(Image(2, 2), dir / "x.bmp"), Error);
}

TEST_CASE("linf distance examples") {
    const Image a = random_image(8, 8, 1);
    CHECK(linf_distance(a, a) == 0.0);
    Image b = a;
    b.at(3, 4, 1) = std::min(1.0, a.at(3, 4, 1) + 8.0 / 255.0);
    CHECK(linf_distance(a, b) == doctest::Approx(8.0 / 255.0));
    CHECK(linf_distance(Image(4, 4, 0.0), Image(4, 4, 1.0)) == 1.0);
    CHECK_THROWS_AS(linf_distance(Image(4, 4), Image(4, 5)), Error);
}

TEST_CASE("psnr closed forms") {
    CHECK_FALSE(psnr(Image(4, 4, 0.3), Image(4, 4, 0.3)).has_value());
    CHECK(*psnr(Image(8, 8, 0.5), Image(8, 8, 0.5 + 8.0 / 255.0)) == doctest::Approx(10 * std::log10(255.0 * 255.0 / 64.0)));
    CHECK(*psnr(Image(8, 8, 0.5), Image(8, 8, 0.5 + 8.0 / 255.0)) == doctest::Approx(30.07).epsilon(1e-3));
    CHECK(*psnr(Image(8, 8, 0.5), Image(8, 8, 0.5 + 1.0 / 255.0)) == doctest::Approx(48.13).epsilon(1e-3));
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Image x = random_image(16, 16, seed);
        Tensor p = x.pixels();
        Rng rng(seed + 50);
        for (auto& v : p.values()) v = std::clamp(v + rng.uniform(-8.0, 8.0) / 255.0, 0.0, 1.0);
        CHECK(*psnr(x, Image(p)) >= 30.07);
    }
}

TEST_CASE("perturbation budget") {
    const Image x(4, 4, 0.5);
    Image y = x;
    y.at(1, 1, 2) = 0.5 + 4.0 / 255.0;
    const auto d = Perturbation::between(x, y, 8.0 / 255.0);
    CHECK(d.linf() == doctest::Approx(4.0 / 255.0));
    CHECK(d.within_budget());
    CHECK_FALSE(Perturbation::between(x, Image(4, 4, 0.6), 8.0 / 255.0).within_budget());
}

}
