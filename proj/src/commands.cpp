#include "featshield/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "featshield/dataset.hpp"
#include "featshield/threat_sim.hpp"

namespace featshield {

using nlohmann::json;

void configure_logging(const std::string& level) {
    if (!spdlog::get("featshield")) {
        auto logger = spdlog::stderr_color_mt("featshield");
        logger->set_pattern("[%l] %v");
        spdlog::set_default_logger(logger);
    }
    spdlog::set_level(spdlog::level::from_str(level));
}

namespace {

const std::filesystem::path& require_path(const std::optional<std::filesystem::path>& p, const char* what) {
    if (!p) throw Error(std::string("config: ") + what + " is required");
    if (!std::filesystem::exists(*p)) throw Error(std::string("config: ") + what + " not found: " + p->string());
    return *p;
}

json record_json(const ProtectionRecord& r) {
    return {{"index", r.index},
            {"path", r.path},
            {"identity", r.identity},
            {"initial_loss", r.initial_loss},
            {"final_loss", r.final_loss},
            {"initial_cos_base", r.initial_cos_base},
            {"final_cos_base", r.final_cos_base},
            {"final_cos_target", r.final_cos_target},
            {"linf", r.linf},
            {"linf_exported", r.linf_exported},
            {"psnr_db", std::isfinite(r.psnr_db) ? json(r.psnr_db) : json(nullptr)},
            {"feasibility_violations", r.feasibility_violations}};
}

ProtectOutcome run_protection(const DatasetManifest& manifest, const EncoderParams& params, const RunConfig& cfg,
                              double ratio, const std::filesystem::path& out_dir) {
    ProtectOptions opts;
    opts.ratio = ratio;
    opts.seed = cfg.seed;
    opts.workers = cfg.workers;
    opts.out_dir = out_dir;
    opts.on_record = [](const ProtectionRecord& r) {
        spdlog::debug("protected {}: cos {:.4f} -> {:.4f}, linf {:.5f}, {:.2f}s", r.path, r.initial_cos_base,
                      r.final_cos_base, r.linf, r.wall_seconds);
    };
    auto outcome = protect_dataset(manifest, params, cfg.objective, cfg.effective_pgd(), opts);
    write_manifest(outcome.manifest, out_dir / "manifest.csv");
    std::ofstream diag(out_dir / "diagnostics.jsonl");
    if (!diag) throw Error("cannot write " + (out_dir / "diagnostics.jsonl").string());
    for (const auto& r : outcome.records) diag << record_json(r).dump() << '\n';
    for (const auto& f : outcome.failures) spdlog::error("failed: {}", f);
    spdlog::info("protected {} of {} entries into {} ({} failures)", outcome.records.size(), manifest.entries.size(),
                 out_dir.string(), outcome.failures.size());
    return outcome;
}

}  // namespace

int cmd_protect(const RunConfig& cfg) {
    cfg.validate();
    const auto manifest = read_manifest(require_path(cfg.manifest, "dataset.manifest"));
    const auto params = resolve_encoder(cfg);
    write_config_echo(cfg, cfg.out);
    const auto outcome = run_protection(manifest, params, cfg, cfg.ratio, cfg.out);
    return outcome.failures.empty() ? kExitOk : kExitPartial;
}

int cmd_evaluate(const RunConfig& cfg) {
    cfg.validate();
    const auto clean = read_manifest(require_path(cfg.manifest, "dataset.manifest"));
    const auto released = read_manifest(require_path(cfg.released_manifest, "dataset.released_manifest"));
    const auto params = resolve_encoder(cfg);
    write_config_echo(cfg, cfg.out);

    const auto report = compute_gfds(clean, released, params, TransformSpec::identity(), cfg.seed);
    write_gfds_json(report, cfg.out / "gfds.json");
    write_gfds_csv(report, cfg.out / "gfds.csv");
    if (cfg.write_svg) write_projection_svg(report, cfg.out / "projection.svg");
    spdlog::info("separation ratio {:.4f}, centroid cos {:.4f} over {} protected entries",
                 report.global.separation_ratio, report.global.centroid_cos, report.global.samples);

    const auto rows = robustness_sweep(clean, released, params, cfg.evaluate_ops, cfg.seed);
    write_robustness_csv(rows, cfg.out / "robustness.csv");
    for (const auto& r : rows) {
        spdlog::info("{}: mean cos {:.4f}, separation {:.4f}", r.op, r.mean_cos_base, r.separation_ratio);
    }
    return kExitOk;
}

int cmd_gen_data(const RunConfig& cfg) {
    cfg.validate();
    const auto params = resolve_encoder(cfg);
    write_config_echo(cfg, cfg.out);
    ThreatSimConfig attack = cfg.attack;
    attack.seed = cfg.seed;
    const auto data = generate_verified_dataset(cfg.synthetic, cfg.seed, cfg.out, params, attack, cfg.min_probe_accuracy);
    json info = {{"generator_seed", data.seed},
                 {"attempts", data.attempts},
                 {"probe_accuracy", data.probe_accuracy},
                 {"entries", data.manifest.entries.size()}};
    std::ofstream(cfg.out / "dataset.json") << info.dump(2) << '\n';
    spdlog::info("wrote {} entries to {} (generator seed {}, clean probe accuracy {:.1f}%)",
                 data.manifest.entries.size(), cfg.out.string(), data.seed, data.probe_accuracy);
    return kExitOk;
}

int cmd_simulate_attack(const RunConfig& cfg) {
    cfg.validate();
    const auto params = resolve_encoder(cfg);
    write_config_echo(cfg, cfg.out);
    ThreatSimConfig attack = cfg.attack;
    attack.seed = cfg.seed;

    DatasetManifest clean;
    if (cfg.manifest) {
        clean = read_manifest(require_path(cfg.manifest, "dataset.manifest"));
    } else {
        const auto data = generate_verified_dataset(cfg.synthetic, cfg.seed, cfg.out / "data", params, attack,
                                                    cfg.min_probe_accuracy);
        spdlog::info("generated toy identities (generator seed {}, clean probe accuracy {:.1f}%)", data.seed,
                     data.probe_accuracy);
        clean = data.manifest;
    }

    // Protect every train image once; each ratio mixes in its selected subset.
    const auto outcome = run_protection(clean, params, cfg, 1.0, cfg.out / "protected");
    if (!outcome.failures.empty()) {
        spdlog::error("{} entries failed to protect; attack sweep skipped", outcome.failures.size());
        return kExitPartial;
    }
    const auto rows = attack_sweep(clean, outcome.manifest, cfg.ratios, cfg.seed, params, attack, cfg.workers);
    write_attack_csv(rows, cfg.out / "attack.csv");
    write_attack_json(rows, cfg.out / "attack.json");
    for (const auto& r : rows) {
        spdlog::info("ratio {:.2f}: identity accuracy {:.1f}% (train {:.1f}%)", r.ratio, r.report.test_accuracy,
                     r.report.train_accuracy);
    }
    return kExitOk;
}

int cmd_inspect(const RunConfig& cfg, const std::filesystem::path& a, const std::filesystem::path& b,
                std::ostream& out) {
    const Image ia = load_image(a);
    const Image ib = load_image(b);
    if (ia.height() != ib.height() || ia.width() != ib.width()) {
        throw Error("inspect: size mismatch " + std::to_string(ia.height()) + "x" + std::to_string(ia.width()) +
                    " vs " + std::to_string(ib.height()) + "x" + std::to_string(ib.width()));
    }
    const auto params = resolve_encoder(cfg);
    const double linf = linf_distance(ia, ib);
    const auto p = psnr(ia, ib);
    const double c = cos_sim(embed(params, ia), embed(params, ib));
    char buf[160];
    std::snprintf(buf, sizeof buf, "linf %.6f (%.2f/255)\n", linf, linf * 255.0);
    out << buf;
    if (p) {
        std::snprintf(buf, sizeof buf, "psnr_db %.4f\n", *p);
    } else {
        std::snprintf(buf, sizeof buf, "psnr_db inf\n");
    }
    out << buf;
    std::snprintf(buf, sizeof buf, "cos_z_base %.6f\n", c);
    out << buf;
    return kExitOk;
}

}  // namespace featshield
