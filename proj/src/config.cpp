#include "featshield/config.hpp"

#include <fstream>
#include <set>

namespace featshield {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw Error("config: '" + where + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) throw Error("config: unknown key '" + it.key() + "' in " + where);
    }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& ex) {
        throw Error("config: bad value for " + where + "." + key + ": " + ex.what());
    }
}

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

void RunConfig::validate() const {
    encoder.validate();
    objective.validate();
    effective_pgd().validate();
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error("config: ratio must lie in [0,1]");
    if (ratios.empty()) throw Error("config: ratios must not be empty");
    for (double r : ratios)
        if (!(r >= 0.0 && r <= 1.0)) throw Error("config: every entry of ratios must lie in [0,1]");
    if (workers < 1) throw Error("config: workers must be >= 1");
    if (evaluate_ops.empty()) throw Error("config: evaluate.ops must not be empty");
    attack.validate(encoder);
    synthetic.validate();
    if (synthetic.image_size != encoder.image_size) {
        throw Error("config: synthetic.image_size must equal encoder.image_size");
    }
    if (!(min_probe_accuracy >= 0.0 && min_probe_accuracy <= 100.0)) {
        throw Error("config: synthetic.min_probe_accuracy must lie in [0,100]");
    }
    static const std::set<std::string> levels{"trace", "debug", "info", "warning", "warn", "error", "critical", "off"};
    if (!levels.count(log_level)) throw Error("config: unknown log_level '" + log_level + "'");
}

PgdConfig RunConfig::effective_pgd() const {
    PgdConfig p = pgd;
    p.seed = seed;
    p.eot = eot_enabled ? eot : EotPolicy::identity_only();
    return p;
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
    check_keys(j, "config",
               {"seed", "encoder", "objective", "pgd", "eot", "dataset", "ratio", "ratios", "out", "workers",
                "log_level", "evaluate", "attack", "synthetic"});
    RunConfig c;
    read(j, "seed", c.seed, "config");
    if (j.contains("encoder")) {
        const auto& e = j["encoder"];
        check_keys(e, "encoder",
                   {"image_size", "patch_size", "encoder_width", "projector_width", "pixel_mean", "pixel_std", "weights"});
        read(e, "image_size", c.encoder.image_size, "encoder");
        read(e, "patch_size", c.encoder.patch_size, "encoder");
        read(e, "encoder_width", c.encoder.encoder_width, "encoder");
        read(e, "projector_width", c.encoder.projector_width, "encoder");
        read(e, "pixel_mean", c.encoder.pixel_mean, "encoder");
        read(e, "pixel_std", c.encoder.pixel_std, "encoder");
        if (e.contains("weights") && !e["weights"].is_null()) {
            c.encoder_weights = resolve_path(base_dir, e["weights"].get<std::string>());
        }
    }
    if (j.contains("objective")) {
        const auto& o = j["objective"];
        check_keys(o, "objective", {"alpha", "beta", "xi"});
        read(o, "alpha", c.objective.alpha, "objective");
        read(o, "beta", c.objective.beta, "objective");
        read(o, "xi", c.objective.xi, "objective");
    }
    if (j.contains("pgd")) {
        const auto& p = j["pgd"];
        check_keys(p, "pgd", {"epsilon", "step", "iterations", "init_sigma", "trace_every"});
        read(p, "epsilon", c.pgd.epsilon, "pgd");
        read(p, "step", c.pgd.step, "pgd");
        read(p, "iterations", c.pgd.iterations, "pgd");
        read(p, "init_sigma", c.pgd.init_sigma, "pgd");
        read(p, "trace_every", c.pgd.trace_every, "pgd");
    }
    if (j.contains("eot")) {
        const auto& e = j["eot"];
        check_keys(e, "eot", {"enabled", "per_iteration", "candidates"});
        read(e, "enabled", c.eot_enabled, "eot");
        read(e, "per_iteration", c.eot.per_iteration, "eot");
        if (e.contains("candidates")) {
            c.eot.candidates.clear();
            for (const auto& cand : e["candidates"]) {
                check_keys(cand, "eot.candidates[]", {"op", "weight"});
                EotPolicy::Candidate entry{parse_transform(cand.at("op").get<std::string>()), 1.0};
                read(cand, "weight", entry.weight, "eot.candidates[]");
                c.eot.candidates.push_back(entry);
            }
        }
    }
    if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        check_keys(d, "dataset", {"manifest", "released_manifest"});
        if (d.contains("manifest") && !d["manifest"].is_null())
            c.manifest = resolve_path(base_dir, d["manifest"].get<std::string>());
        if (d.contains("released_manifest") && !d["released_manifest"].is_null())
            c.released_manifest = resolve_path(base_dir, d["released_manifest"].get<std::string>());
    }
    read(j, "ratio", c.ratio, "config");
    read(j, "ratios", c.ratios, "config");
    if (j.contains("out")) c.out = resolve_path(base_dir, j["out"].get<std::string>());
    read(j, "workers", c.workers, "config");
    read(j, "log_level", c.log_level, "config");
    if (j.contains("evaluate")) {
        const auto& e = j["evaluate"];
        check_keys(e, "evaluate", {"ops", "svg"});
        if (e.contains("ops")) {
            c.evaluate_ops.clear();
            for (const auto& op : e["ops"]) c.evaluate_ops.push_back(parse_transform(op.get<std::string>()));
        }
        read(e, "svg", c.write_svg, "evaluate");
    }
    if (j.contains("attack")) {
        const auto& a = j["attack"];
        check_keys(a, "attack", {"rank", "learning_rate", "epochs"});
        read(a, "rank", c.attack.rank, "attack");
        read(a, "learning_rate", c.attack.learning_rate, "attack");
        read(a, "epochs", c.attack.epochs, "attack");
    }
    if (j.contains("synthetic")) {
        const auto& s = j["synthetic"];
        check_keys(s, "synthetic",
                   {"identities", "images_per_identity", "train_per_identity", "image_size", "variation", "color_spread",
                    "texture_amplitude", "min_probe_accuracy"});
        read(s, "identities", c.synthetic.identities, "synthetic");
        read(s, "images_per_identity", c.synthetic.images_per_identity, "synthetic");
        read(s, "train_per_identity", c.synthetic.train_per_identity, "synthetic");
        read(s, "image_size", c.synthetic.image_size, "synthetic");
        read(s, "variation", c.synthetic.variation, "synthetic");
        read(s, "color_spread", c.synthetic.color_spread, "synthetic");
        read(s, "texture_amplitude", c.synthetic.texture_amplitude, "synthetic");
        read(s, "min_probe_accuracy", c.min_probe_accuracy, "synthetic");
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("config: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& ex) {
        throw Error("config: " + path.string() + " is not valid JSON: " + ex.what());
    }
    return parse_run_config(j, path.parent_path());
}

json to_json(const RunConfig& c) {
    json eot_candidates = json::array();
    for (const auto& cand : c.eot.candidates) eot_candidates.push_back({{"op", cand.spec.label()}, {"weight", cand.weight}});
    json ops = json::array();
    for (const auto& op : c.evaluate_ops) ops.push_back(op.label());
    auto opt_path = [](const std::optional<std::filesystem::path>& p) -> json {
        return p ? json(p->string()) : json(nullptr);
    };
    return {
        {"seed", c.seed},
        {"encoder",
         {{"image_size", c.encoder.image_size},
          {"patch_size", c.encoder.patch_size},
          {"encoder_width", c.encoder.encoder_width},
          {"projector_width", c.encoder.projector_width},
          {"pixel_mean", c.encoder.pixel_mean},
          {"pixel_std", c.encoder.pixel_std},
          {"weights", opt_path(c.encoder_weights)}}},
        {"objective", {{"alpha", c.objective.alpha}, {"beta", c.objective.beta}, {"xi", c.objective.xi}}},
        {"pgd",
         {{"epsilon", c.pgd.epsilon},
          {"step", c.pgd.step},
          {"iterations", c.pgd.iterations},
          {"init_sigma", c.pgd.init_sigma},
          {"trace_every", c.pgd.trace_every}}},
        {"eot", {{"enabled", c.eot_enabled}, {"per_iteration", c.eot.per_iteration}, {"candidates", eot_candidates}}},
        {"dataset", {{"manifest", opt_path(c.manifest)}, {"released_manifest", opt_path(c.released_manifest)}}},
        {"ratio", c.ratio},
        {"ratios", c.ratios},
        {"out", c.out.string()},
        {"workers", c.workers},
        {"log_level", c.log_level},
        {"evaluate", {{"ops", ops}, {"svg", c.write_svg}}},
        {"attack",
         {{"rank", c.attack.rank}, {"learning_rate", c.attack.learning_rate}, {"epochs", c.attack.epochs}}},
        {"synthetic",
         {{"identities", c.synthetic.identities},
          {"images_per_identity", c.synthetic.images_per_identity},
          {"train_per_identity", c.synthetic.train_per_identity},
          {"image_size", c.synthetic.image_size},
          {"variation", c.synthetic.variation},
          {"color_spread", c.synthetic.color_spread},
          {"texture_amplitude", c.synthetic.texture_amplitude},
          {"min_probe_accuracy", c.min_probe_accuracy}}},
    };
}

void write_config_echo(const RunConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "config.json");
    if (!out) throw Error("cannot write " + (dir / "config.json").string());
    out << to_json(cfg).dump(2) << '\n';
}

EncoderParams resolve_encoder(const RunConfig& cfg) {
    if (cfg.encoder_weights) {
        EncoderParams p = load_encoder(*cfg.encoder_weights);
        if (p.config.image_size != cfg.encoder.image_size) {
            throw Error("config: encoder weights expect image size " + std::to_string(p.config.image_size));
        }
        return p;
    }
    EncoderConfig ec = cfg.encoder;
    ec.seed = cfg.seed;
    return init_encoder(ec);
}

}  // namespace featshield
