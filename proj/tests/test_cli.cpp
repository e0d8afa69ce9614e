#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "featshield/commands.hpp"
#include "featshield/config.hpp"
#include "featshield/dataset.hpp"
#include "featshield/threat_sim.hpp"
#include "helpers.hpp"

using namespace featshield;
using nlohmann::json;
using testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

/// Runs the CLI with stdout and stderr redirected into `log`; returns the exit status.
int run_cli(const std::string& args, const std::filesystem::path& log) {
    const std::string cmd = std::string(FEATSHIELD_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_json(const json& j, const std::filesystem::path& p) {
    std::ofstream(p) << j.dump(2);
}

DatasetManifest small_set(const std::filesystem::path& dir) {
    SyntheticIdentityConfig c;
    c.identities = 2;
    c.images_per_identity = 4;
    c.train_per_identity = 3;
    return generate_synthetic_dataset(c, 3, dir);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config parses every section") {
    const json j = {
        {"seed", 7},
        {"encoder", {{"image_size", 16}, {"patch_size", 4}}},
        {"objective", {{"alpha", 5.0}, {"beta", 0.5}}},
        {"pgd", {{"epsilon", 4.0 / 255.0}, {"iterations", 10}}},
        {"eot", {{"enabled", true}, {"candidates", {{{"op", "blur3"}, {"weight", 2.0}}, {{"op", "noise5"}, {"weight", 1.0}}}}}},
        {"dataset", {{"manifest", "data/manifest.csv"}}},
        {"ratio", 0.4},
        {"ratios", {0.0, 1.0}},
        {"out", "runs/a"},
        {"workers", 2},
        {"evaluate", {{"ops", {"identity", "blur5"}}, {"svg", false}}},
        {"attack", {{"rank", 2}, {"epochs", 50}}},
        {"synthetic", {{"identities", 3}, {"min_probe_accuracy", 50.0}}},
    };
    const auto cfg = parse_run_config(j, "/base");
    CHECK(cfg.seed == 7);
    CHECK(cfg.encoder.image_size == 16);
    CHECK(cfg.objective.alpha == 5.0);
    CHECK(cfg.objective.xi == 1e-8);
    CHECK(cfg.pgd.iterations == 10);
    CHECK(cfg.pgd.step == doctest::Approx(1.0 / 255.0));
    CHECK(cfg.eot_enabled);
    CHECK(cfg.eot.candidates.size() == 2);
    CHECK(*cfg.manifest == std::filesystem::path("/base/data/manifest.csv"));
    CHECK(cfg.ratio == 0.4);
    CHECK(cfg.ratios == std::vector<double>{0.0, 1.0});
    CHECK(cfg.out == std::filesystem::path("/base/runs/a"));
    CHECK(cfg.workers == 2);
    CHECK(cfg.evaluate_ops.size() == 2);
    CHECK_FALSE(cfg.write_svg);
    CHECK(cfg.attack.rank == 2);
    CHECK(cfg.synthetic.identities == 3);
    CHECK(cfg.min_probe_accuracy == 50.0);
    CHECK(cfg.effective_pgd().eot.candidates.size() == 2);
    CHECK(to_json(parse_run_config(to_json(cfg))) == to_json(cfg));
}

TEST_CASE("config defaults and rejection") {
    const auto d = parse_run_config(json::object());
    CHECK(d.pgd.epsilon == doctest::Approx(8.0 / 255.0));
    CHECK(d.pgd.iterations == 1000);
    CHECK(d.objective.alpha == 10.0);
    CHECK(d.objective.beta == 1.0);
    CHECK(d.ratio == 1.0);
    CHECK(d.effective_pgd().eot.candidates.size() == 1);
    CHECK_THROWS_AS(parse_run_config(json{{"sead", 1}}), Error);
    CHECK_THROWS_AS(parse_run_config(json{{"pgd", {{"eps", 0.1}}}}), Error);
    CHECK_THROWS_AS(parse_run_config(json{{"ratio", 1.5}}).validate(), Error);
    CHECK_THROWS_AS(parse_run_config(json{{"evaluate", {{"ops", {"sharpen"}}}}}), Error);
    CHECK_THROWS_AS(load_run_config("/nonexistent/featshield.json"), Error);
}

TEST_CASE("usage errors exit 2") {
    TempDir dir("cli_usage");
    CHECK(run_cli("--help", dir / "log") == 0);
    CHECK(run_cli("protect --bogus", dir / "log") == 2);
    CHECK(run_cli("protect --config " + (dir / "missing.json").string(), dir / "log") == 2);
    std::ofstream(dir / "bad.json") << "{ not json";
    CHECK(run_cli("protect --config " + (dir / "bad.json").string(), dir / "log") == 2);
    write_json({{"ratio", 2.0}}, dir / "range.json");
    CHECK(run_cli("protect --config " + (dir / "range.json").string(), dir / "log") == 2);
    CHECK(run_cli("protect --out " + (dir / "o").string(), dir / "log") == 2);
}

TEST_CASE("inspect") {
    TempDir dir("cli_inspect");
    save_image(Image(32, 32, 0.0), dir / "zeros.png");
    save_image(Image(32, 32, 1.0), dir / "ones.png");
    save_image(Image(4, 4, 0.0), dir / "small.png");
    const auto z = (dir / "zeros.png").string(), o = (dir / "ones.png").string();

    CHECK(run_cli("inspect " + z + " " + z, dir / "log") == 0);
    const auto same = slurp(dir / "log");
    CHECK(same.find("linf 0.000000 ") != std::string::npos);
    CHECK(same.find("psnr_db inf") != std::string::npos);

    RunConfig cfg;
    cfg.encoder = EncoderConfig{};
    cfg.encoder.image_size = 8;
    cfg.encoder.patch_size = 4;
    std::ostringstream out;
    save_image(testing::random_image(8, 8, 1), dir / "r.png");
    CHECK(cmd_inspect(cfg, dir / "r.png", dir / "r.png", out) == 0);
    CHECK(out.str().find("cos_z_base 1") != std::string::npos);

    CHECK(run_cli("inspect " + z + " " + o, dir / "log") == 0);
    CHECK(slurp(dir / "log").find("linf 1.000000 ") != std::string::npos);
    CHECK(run_cli("inspect " + z + " " + (dir / "small.png").string(), dir / "log") == 2);
}

TEST_CASE("protect at ratio 0 releases nothing protected") {
    TempDir dir("cli_ratio0");
    small_set(dir / "data");
    const auto out = dir / "out";
    CHECK(run_cli("protect --manifest " + (dir / "data" / "manifest.csv").string() + " --ratio 0 --out " +
                      out.string(), dir / "log") == 0);
    const auto m = read_manifest(out / "manifest.csv");
    CHECK(m.entries.size() == 8);
    CHECK(m.protected_count() == 0);
    CHECK(std::filesystem::exists(out / "config.json"));
    CHECK(slurp(out / "diagnostics.jsonl").empty());
}

TEST_CASE("protect writes within-budget images and one diagnostics line each") {
    TempDir dir("cli_protect");
    const auto clean = small_set(dir / "data");
    const auto out = dir / "out";
    const std::string args = "protect --manifest " + (dir / "data" / "manifest.csv").string() +
                             " --iters 20 --epsilon 8/255 --seed 3";
    CHECK(run_cli(args + " --out " + out.string(), dir / "log") == 0);
    const auto m = read_manifest(out / "manifest.csv");
    CHECK(m.protected_count() == 6);
    CHECK(lines(slurp(out / "diagnostics.jsonl")) == 6);
    const auto cfg = json::parse(slurp(out / "config.json"));
    CHECK(cfg.at("pgd").at("iterations") == 20);
    CHECK(cfg.at("seed") == 3);
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const auto a = clean.resolve(clean.entries[i]).string(), b = m.resolve(m.entries[i]).string();
        CHECK(linf_distance(load_image(a), load_image(b)) <= 8.0 / 255.0 + 0.5 / 255.0);
    }

    std::istringstream diag(slurp(out / "diagnostics.jsonl"));
    std::string line;
    while (std::getline(diag, line)) {
        const auto rec = json::parse(line);
        CHECK(rec.at("feasibility_violations") == 0);
        CHECK(rec.at("final_cos_base").get<double>() < rec.at("initial_cos_base").get<double>());
    }

    // Identical rerun is byte for byte identical.
    CHECK(run_cli(args + " --workers 2 --out " + (dir / "again").string(), dir / "log2") == 0);
    CHECK(slurp(out / "diagnostics.jsonl") == slurp(dir / "again" / "diagnostics.jsonl"));
    for (const auto& e : m.entries) CHECK(slurp(out / e.path) == slurp(dir / "again" / e.path));

    // evaluate: identity-only table has one row and reruns byte-identically.
    const std::string eval = "evaluate --manifest " + (dir / "data" / "manifest.csv").string() + " --released " +
                             (out / "manifest.csv").string() + " --out ";
    CHECK(run_cli(eval + (dir / "e1").string(), dir / "log") == 0);
    CHECK(run_cli(eval + (dir / "e2").string(), dir / "log") == 0);
    CHECK(lines(slurp(dir / "e1" / "robustness.csv")) == 2);
    for (const char* f : {"robustness.csv", "gfds.json", "gfds.csv", "projection.svg"}) {
        CHECK(slurp(dir / "e1" / f) == slurp(dir / "e2" / f));
    }
    write_json({{"evaluate", {{"ops", {"identity", "blur3", "blur5", "noise5", "resize0.75", "crop0.9", "occlusion0.1"}}}}},
               dir / "suite.json");
    CHECK(run_cli(eval + (dir / "e3").string() + " --config " + (dir / "suite.json").string(), dir / "log") == 0);
    CHECK(lines(slurp(dir / "e3" / "robustness.csv")) == 8);

    // inspect: original vs protected stays inside the exported budget.
    const auto idx = m.indices(Split::train).front();
    std::ostringstream o;
    CHECK(cmd_inspect(RunConfig{}, clean.resolve(clean.entries[idx]), m.resolve(m.entries[idx]), o) == 0);
    const double linf = std::stod(o.str().substr(5));
    CHECK(linf <= 8.0 / 255.0 + 0.5 / 255.0);
}

TEST_CASE("a missing image exits 1 and is named in the log") {
    TempDir dir("cli_missing");
    const auto m = small_set(dir / "data");
    const auto victim = m.entries[m.indices(Split::train)[1]];
    std::filesystem::remove(m.resolve(victim));
    CHECK(run_cli("protect --manifest " + (dir / "data" / "manifest.csv").string() + " --iters 5 --out " +
                      (dir / "out").string(), dir / "log") == 1);
    CHECK(slurp(dir / "log").find(victim.path) != std::string::npos);
}

TEST_CASE("simulate-attack over two ratios is reproducible") {
    TempDir dir("cli_attack");
    write_json({{"ratios", {0.0, 1.0}},
                {"pgd", {{"iterations", 10}}},
                {"attack", {{"epochs", 100}}},
                {"synthetic", {{"identities", 3}, {"images_per_identity", 4}, {"train_per_identity", 3},
                               {"min_probe_accuracy", 0.0}}}},
               dir / "cfg.json");
    const std::string args = "simulate-attack --seed 4 --config " + (dir / "cfg.json").string() + " --out ";
    CHECK(run_cli(args + (dir / "a").string(), dir / "log") == 0);
    CHECK(run_cli(args + (dir / "b").string(), dir / "log") == 0);
    const auto csv = slurp(dir / "a" / "attack.csv");
    CHECK(lines(csv) == 3);
    CHECK(csv == slurp(dir / "b" / "attack.csv"));
    CHECK(slurp(dir / "a" / "attack.json") == slurp(dir / "b" / "attack.json"));
    CHECK(std::filesystem::exists(dir / "a" / "config.json"));
}

}
