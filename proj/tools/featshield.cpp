// featshield command-line entry point.
//
// Precedence: built-in defaults < --config file < command-line flags.
// FEATSHIELD_LOG_LEVEL (trace, debug, info, warning, error, critical, off)
// overrides the config's log_level.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "featshield/commands.hpp"

namespace {

using featshield::RunConfig;

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<double> ratio;
    std::optional<std::size_t> workers;
    std::optional<std::string> out;
    std::optional<std::string> epsilon;
    std::optional<double> alpha;
    std::optional<double> beta;
    std::optional<std::size_t> iters;
    std::optional<std::string> manifest;
    std::optional<std::string> released;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON run config")->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "master seed");
    cmd->add_option("--workers", f.workers, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--out", f.out, "output directory");
}

void add_protection(CLI::App* cmd, Flags& f) {
    cmd->add_option("--epsilon", f.epsilon, "linf budget, e.g. 0.0314 or 8/255");
    cmd->add_option("--alpha", f.alpha, "push weight alpha");
    cmd->add_option("--beta", f.beta, "pull weight beta");
    cmd->add_option("--iters", f.iters, "PGD iterations");
}

double parse_fraction(const std::string& s) {
    const auto slash = s.find('/');
    std::size_t used = 0;
    if (slash == std::string::npos) {
        const double v = std::stod(s, &used);
        if (used != s.size()) throw featshield::Error("bad number: " + s);
        return v;
    }
    const double num = std::stod(s.substr(0, slash), &used);
    if (used != slash) throw featshield::Error("bad fraction: " + s);
    const std::string den_s = s.substr(slash + 1);
    const double den = std::stod(den_s, &used);
    if (used != den_s.size() || den == 0.0) throw featshield::Error("bad fraction: " + s);
    return num / den;
}

RunConfig resolve(const Flags& f) {
    RunConfig cfg = f.config.empty() ? RunConfig{} : featshield::load_run_config(f.config);
    if (f.seed) cfg.seed = *f.seed;
    if (f.ratio) cfg.ratio = *f.ratio;
    if (f.workers) cfg.workers = *f.workers;
    if (f.out) cfg.out = *f.out;
    if (f.epsilon) cfg.pgd.epsilon = parse_fraction(*f.epsilon);
    if (f.alpha) cfg.objective.alpha = *f.alpha;
    if (f.beta) cfg.objective.beta = *f.beta;
    if (f.iters) cfg.pgd.iterations = *f.iters;
    if (f.manifest) cfg.manifest = *f.manifest;
    if (f.released) cfg.released_manifest = *f.released;
    if (const char* env = std::getenv("FEATSHIELD_LOG_LEVEL")) cfg.log_level = env;
    cfg.validate();
    featshield::configure_logging(cfg.log_level);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"featshield: protect image datasets against identity learning by feature-space perturbation"};
    app.require_subcommand(1);
    Flags f;

    auto* protect = app.add_subcommand("protect", "perturb a dataset at a protection ratio");
    add_common(protect, f);
    add_protection(protect, f);
    protect->add_option("--ratio", f.ratio, "fraction of train images to protect")->check(CLI::Range(0.0, 1.0));
    protect->add_option("--manifest", f.manifest, "input manifest CSV");

    auto* evaluate = app.add_subcommand("evaluate", "feature-shift statistics and post-processing sweep");
    add_common(evaluate, f);
    evaluate->add_option("--manifest", f.manifest, "clean manifest CSV");
    evaluate->add_option("--released", f.released, "protected manifest CSV written by protect");

    auto* simulate = app.add_subcommand("simulate-attack", "train the simulated attacker at several protection ratios");
    add_common(simulate, f);
    add_protection(simulate, f);
    simulate->add_option("--manifest", f.manifest, "clean manifest CSV (generated when omitted)");

    auto* gen = app.add_subcommand("gen-data", "write the synthetic identity dataset");
    add_common(gen, f);

    std::string image_a, image_b;
    auto* inspect = app.add_subcommand("inspect", "compare two images");
    add_common(inspect, f);
    inspect->add_option("a", image_a, "first image")->required();
    inspect->add_option("b", image_b, "second image")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? featshield::kExitOk : featshield::kExitUsage;
    }

    RunConfig cfg;
    try {
        cfg = resolve(f);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return featshield::kExitUsage;
    }

    try {
        if (*protect) return featshield::cmd_protect(cfg);
        if (*evaluate) return featshield::cmd_evaluate(cfg);
        if (*simulate) return featshield::cmd_simulate_attack(cfg);
        if (*gen) return featshield::cmd_gen_data(cfg);
        if (*inspect) return featshield::cmd_inspect(cfg, image_a, image_b, std::cout);
    } catch (const featshield::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return featshield::kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return featshield::kExitPartial;
    }
    return featshield::kExitUsage;
}
