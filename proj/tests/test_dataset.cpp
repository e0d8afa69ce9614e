#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include <json.hpp>

#include "featshield/dataset.hpp"
#include "featshield/pca.hpp"
#include "featshield/threat_sim.hpp"
#include "helpers.hpp"

using namespace featshield;
using testing::random_tensor;
using testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

/// 2 identities x 6 images, 5 train each: 10 train and 2 test entries.
DatasetManifest small_set(const std::filesystem::path& dir) {
    SyntheticIdentityConfig c;
    c.identities = 2;
    c.images_per_identity = 6;
    c.train_per_identity = 5;
    return generate_synthetic_dataset(c, 3, dir);
}

PgdConfig quick_pgd() {
    PgdConfig p;
    p.iterations = 20;
    return p;
}

ProtectOptions options(const std::filesystem::path& out, double ratio, std::size_t workers = 1) {
    ProtectOptions o;
    o.ratio = ratio;
    o.seed = 11;
    o.workers = workers;
    o.out_dir = out;
    return o;
}

Tensor unit_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
    Tensor t = random_tensor({n, d}, seed, -1.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += t[i * d + j] * t[i * d + j];
        for (std::size_t j = 0; j < d; ++j) t[i * d + j] /= std::sqrt(s);
    }
    return t;
}

}  // namespace

TEST_SUITE("dataset_pipeline") {

TEST_CASE("manifest round trip") {
    TempDir dir("manifest_rt");
    DatasetManifest m;
    m.root = dir.path();
    m.entries = {
        {"a.png", "plain caption", "id0", Split::train, false},
        {"b.png", "has, a comma and \"quotes\"", "id0", Split::test, false},
        {"c d.png", "", "id,1", Split::train, true},
        {"e.png", "x", "id,1", Split::test, false},
    };
    write_manifest(m, dir / "m.csv");
    const auto back = read_manifest(dir / "m.csv");
    CHECK(back.entries == m.entries);
    CHECK(back.root == dir.path());
    CHECK(slurp(dir / "m.csv").rfind("path,caption,identity,split,protected\n", 0) == 0);
}

TEST_CASE("manifest validation") {
    DatasetManifest m;
    m.entries = {{"a.png", "", "id0", Split::train, false}};
    CHECK_THROWS_AS(m.validate(), Error);
    m.entries.push_back({"b.png", "", "id0", Split::test, true});
    CHECK_THROWS_AS(m.validate(), Error);
    m.entries.back().protected_flag = false;
    CHECK_NOTHROW(m.validate());
    CHECK_THROWS_AS(split_from_string("val"), Error);
}

TEST_CASE("selection by ratio") {
    TempDir dir("select");
    const auto m = small_set(dir.path());
    REQUIRE(m.indices(Split::train).size() == 10);
    CHECK(select_for_protection(m, 0.6, 5).size() == 6);
    CHECK(select_for_protection(m, 0.6, 5) == select_for_protection(m, 0.6, 5));
    CHECK(select_for_protection(m, 0.0, 5).empty());
    CHECK(select_for_protection(m, 1.0, 5).size() == 10);
    CHECK_THROWS_AS(select_for_protection(m, 1.5, 5), Error);

    const auto train = m.indices(Split::train);
    const std::set<std::size_t> train_set(train.begin(), train.end());
    std::set<std::size_t> prev;
    for (double r : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
        const auto sel = select_for_protection(m, r, 9);
        const std::set<std::size_t> cur(sel.begin(), sel.end());
        for (auto i : prev) CHECK(cur.count(i) == 1);
        for (auto i : cur) CHECK(train_set.count(i) == 1);
        prev = cur;
    }
}

TEST_CASE("ratio 0 is a byte-identical copy") {
    TempDir dir("ratio0");
    const auto m = small_set(dir / "data");
    const auto out = protect_dataset(m, init_encoder(EncoderConfig{}), ObjectiveConfig{}, quick_pgd(),
                                     options(dir / "out", 0.0));
    CHECK(out.failures.empty());
    CHECK(out.records.empty());
    CHECK(out.manifest.protected_count() == 0);
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        CHECK(slurp(out.manifest.resolve(out.manifest.entries[i])) == slurp(m.resolve(m.entries[i])));
    }
}

TEST_CASE("ratio 1 protects every train image within budget, captions unchanged") {
    TempDir dir("ratio1");
    const auto m = small_set(dir / "data");
    const auto pgd = quick_pgd();
    const auto out = protect_dataset(m, init_encoder(EncoderConfig{}), ObjectiveConfig{}, pgd, options(dir / "out", 1.0));
    CHECK(out.failures.empty());
    CHECK(out.records.size() == 10);
    CHECK(out.manifest.protected_count() == 10);
    CHECK_NOTHROW(out.manifest.validate());
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const auto& a = m.entries[i];
        const auto& b = out.manifest.entries[i];
        CHECK(a.caption == b.caption);
        CHECK(a.identity == b.identity);
        CHECK(a.split == b.split);
        CHECK(b.protected_flag == (a.split == Split::train));
        const double d = linf_distance(load_image(m.resolve(a)), load_image(out.manifest.resolve(b)));
        CHECK(d <= pgd.epsilon + 0.5 / 255.0);
    }
    for (const auto& r : out.records) CHECK(r.feasibility_violations == 0);
    write_manifest(out.manifest, dir / "out" / "manifest.csv");
    CHECK(read_manifest(dir / "out" / "manifest.csv").entries == out.manifest.entries);
}

TEST_CASE("ratio 0.6 selects the same 6 each run, independent of workers") {
    TempDir dir("ratio06");
    const auto m = small_set(dir / "data");
    const auto p = init_encoder(EncoderConfig{});
    const auto a = protect_dataset(m, p, ObjectiveConfig{}, quick_pgd(), options(dir / "a", 0.6, 1));
    const auto b = protect_dataset(m, p, ObjectiveConfig{}, quick_pgd(), options(dir / "b", 0.6, 3));
    CHECK(a.manifest.protected_count() == 6);
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        CHECK(a.manifest.entries[i].protected_flag == b.manifest.entries[i].protected_flag);
        CHECK(slurp(a.manifest.resolve(a.manifest.entries[i])) == slurp(b.manifest.resolve(b.manifest.entries[i])));
    }
}

TEST_CASE("a missing image is reported and the rest continue") {
    TempDir dir("missing");
    auto m = small_set(dir / "data");
    const auto train = m.indices(Split::train);
    std::filesystem::remove(m.resolve(m.entries[train[0]]));
    const auto out = protect_dataset(m, init_encoder(EncoderConfig{}), ObjectiveConfig{}, quick_pgd(),
                                     options(dir / "out", 1.0));
    REQUIRE(out.failures.size() == 1);
    CHECK(out.failures[0].find(m.entries[train[0]].path) != std::string::npos);
    CHECK(out.records.size() == 9);
}

TEST_CASE("gfds statistics examples") {
    const Tensor u = unit_rows(6, 5, 1);
    const auto same = gfds_stats(u, u);
    CHECK(same.centroid_cos == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(same.centroid_displacement == 0.0);
    CHECK(same.separation_ratio == 0.0);
    CHECK(same.mean_pair_cos == doctest::Approx(1.0).epsilon(1e-12));

    Tensor neg = u;
    for (auto& v : neg.values()) v = -v;
    const auto opposite = gfds_stats(u, neg);
    CHECK(opposite.centroid_cos == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(opposite.separation_ratio >= 0.0);

    CHECK_THROWS_AS(gfds_stats(unit_rows(1, 5, 2), unit_rows(1, 5, 3)), Error);
}

TEST_CASE("pca recovers the dominant direction") {
    // Points spread along (1,1,0)/sqrt2 with small noise in other directions.
    const std::size_t n = 200;
    Tensor s({n, 3});
    Rng rng(4);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = rng.normal() * 3.0;
        s[i * 3 + 0] = t / std::sqrt(2.0) + 0.1 * rng.normal();
        s[i * 3 + 1] = t / std::sqrt(2.0) + 0.1 * rng.normal();
        s[i * 3 + 2] = 0.3 * rng.normal();
    }
    const auto pca = pca_power_iteration(s, 2, 100, 7);
    const auto& c0 = pca.components[0];
    CHECK(std::abs(c0[0] + c0[1]) / std::sqrt(2.0) == doctest::Approx(1.0).epsilon(1e-3));
    double dot = 0.0;
    for (std::size_t j = 0; j < 3; ++j) dot += c0[j] * pca.components[1][j];
    CHECK(std::abs(dot) <= 1e-8);
    CHECK(pca.eigenvalues[0] >= pca.eigenvalues[1]);
    CHECK(pca.eigenvalues[0] == doctest::Approx(9.0).epsilon(0.25));
    CHECK(pca.coords.all_finite());
    CHECK(pca.coords.dim(0) == n);
    const auto again = pca_power_iteration(s, 2, 100, 7);
    CHECK(again.coords == pca.coords);
}

TEST_CASE("exposure grows with ratio while per-image shifts stay fixed") {
    TempDir dir("exposure");
    const auto m = small_set(dir / "data");
    const auto p = init_encoder(EncoderConfig{});
    const auto half = protect_dataset(m, p, ObjectiveConfig{}, quick_pgd(), options(dir / "half", 0.5));
    const auto full = protect_dataset(m, p, ObjectiveConfig{}, quick_pgd(), options(dir / "full", 1.0));
    const auto zero = protect_dataset(m, p, ObjectiveConfig{}, quick_pgd(), options(dir / "zero", 0.0));
    CHECK_THROWS_AS(compute_gfds(m, zero.manifest, p), Error);
    const auto g_half = compute_gfds(m, half.manifest, p);
    const auto g_full = compute_gfds(m, full.manifest, p);
    CHECK(g_half.mixed_train_displacement > 0.0);
    CHECK(g_full.mixed_train_displacement >= g_half.mixed_train_displacement);
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        if (!half.manifest.entries[i].protected_flag) continue;
        CHECK(slurp(half.manifest.resolve(half.manifest.entries[i])) ==
              slurp(full.manifest.resolve(full.manifest.entries[i])));
    }
    for (const auto& pt : g_full.projection) {
        CHECK(std::isfinite(pt.x));
        CHECK(std::isfinite(pt.y));
    }
    CHECK(g_full.projection.size() == 20);
}

TEST_CASE("default protection separates the groups and noise keeps most of it") {
    std::ifstream in(FEATSHIELD_GOLDEN_DIR "/gfds_small.json");
    REQUIRE(in);
    const auto golden = nlohmann::json::parse(in);
    TempDir dir("gfds_default");
    const auto m = small_set(dir / "data");
    const auto p = init_encoder(EncoderConfig{});
    ProtectOptions o = options(dir / "out", 1.0);
    const auto out = protect_dataset(m, p, ObjectiveConfig{}, PgdConfig{}, o);
    const auto report = compute_gfds(m, out.manifest, p);
    CHECK(report.global.separation_ratio > 1.0);
    CHECK(report.global.separation_ratio ==
          doctest::Approx(golden.at("separation_ratio").get<double>()).epsilon(1e-6));

    const auto rows = robustness_sweep(m, out.manifest, p,
                                       {TransformSpec::identity(), TransformSpec::gaussian_noise(5.0)});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].separation_ratio == report.global.separation_ratio);
    CHECK(rows[0].centroid_displacement == report.global.centroid_displacement);
    CHECK(rows[0].mean_cos_base == report.mean_full_cos);
    const double kept = rows[1].separation_ratio / rows[0].separation_ratio;
    CHECK(kept > 0.5);
    CHECK(kept == doctest::Approx(golden.at("noise5_kept").get<double>()).epsilon(1e-6));
}

TEST_CASE("report writers are deterministic") {
    TempDir dir("writers");
    const auto m = small_set(dir / "data");
    const auto p = init_encoder(EncoderConfig{});
    const auto out = protect_dataset(m, p, ObjectiveConfig{}, quick_pgd(), options(dir / "out", 1.0));
    const auto ops = evaluation_suite();
    for (const char* run : {"a", "b"}) {
        const auto report = compute_gfds(m, out.manifest, p);
        write_gfds_json(report, dir / (std::string(run) + ".json"));
        write_gfds_csv(report, dir / (std::string(run) + ".csv"));
        write_projection_svg(report, dir / (std::string(run) + ".svg"));
        write_robustness_csv(robustness_sweep(m, out.manifest, p, ops), dir / (std::string(run) + "_rob.csv"));
    }
    for (const char* ext : {".json", ".csv", ".svg", "_rob.csv"}) {
        CHECK(slurp(dir / (std::string("a") + ext)) == slurp(dir / (std::string("b") + ext)));
    }
    const auto rob = slurp(dir / "a_rob.csv");
    CHECK(std::count(rob.begin(), rob.end(), '\n') == 8);
    CHECK(nlohmann::json::parse(slurp(dir / "a.json")).contains("global"));
}

TEST_CASE("parallel_for covers every index and rethrows") {
    std::vector<int> hits(50, 0);
    parallel_for(50, 4, [&](std::size_t i) { hits[i]++; });
    for (int h : hits) CHECK(h == 1);
    CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) { if (i == 7) throw Error("boom"); }), Error);
}

}
