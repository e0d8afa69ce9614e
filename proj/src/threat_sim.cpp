#include "featshield/threat_sim.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "featshield/dataset.hpp"
#include "featshield/random.hpp"

namespace featshield {

void ThreatSimConfig::validate(const EncoderConfig& enc) const {
    if (rank < 1 || rank > std::min(enc.encoder_width, enc.projector_width)) {
        throw Error("ThreatSimConfig: rank must lie in [1, min(encoder width, projector width)]");
    }
    if (!(learning_rate > 0.0)) throw Error("ThreatSimConfig: learning rate must be > 0");
    if (epochs < 1) throw Error("ThreatSimConfig: epochs must be >= 1");
}

Tensor pooled_hidden(const EncoderParams& params, const Image& image) {
    Tape tape;
    return ops::mean_rows(encode_tokens(params, tape.constant(image.pixels()))).value();
}

DatasetManifest generate_synthetic_dataset(const SyntheticIdentityConfig& cfg, std::uint64_t seed,
                                           const std::filesystem::path& out_dir) {
    cfg.validate();
    DatasetManifest m;
    m.root = out_dir;
    for (std::size_t id = 0; id < cfg.identities; ++id) {
        const auto sig = make_signature(seed, id, cfg.color_spread, cfg.texture_amplitude);
        char name[32];
        std::snprintf(name, sizeof name, "id%02zu", id);
        for (std::size_t k = 0; k < cfg.images_per_identity; ++k) {
            const auto img_seed = derive_seed(derive_seed(seed, id), 5000 + k);
            const Image img = render_identity_image(sig, cfg.image_size, cfg.variation, img_seed);
            char file[64];
            std::snprintf(file, sizeof file, "images/%s_%03zu.png", name, k);
            save_image(img, out_dir / file);
            ManifestEntry e;
            e.path = file;
            e.caption = std::string("A photo of person ") + name + ", picture " + std::to_string(k) + ".";
            e.identity = name;
            e.split = k < cfg.train_per_identity ? Split::train : Split::test;
            m.entries.push_back(std::move(e));
        }
    }
    write_manifest(m, out_dir / "manifest.csv");
    return m;
}

VerifiedDataset generate_verified_dataset(const SyntheticIdentityConfig& cfg, std::uint64_t seed,
                                          const std::filesystem::path& out_dir, const EncoderParams& params,
                                          const ThreatSimConfig& attack, double min_accuracy,
                                          std::size_t max_attempts) {
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
        const std::uint64_t s = seed + attempt;
        std::filesystem::remove_all(out_dir / "images");
        auto manifest = generate_synthetic_dataset(cfg, s, out_dir);
        const auto model = train_attacker(manifest, params, attack);
        const auto report = evaluate_attack(model, manifest, params);
        if (report.test_accuracy >= min_accuracy) return {std::move(manifest), s, report.test_accuracy, attempt + 1};
    }
    throw Error("generate_verified_dataset: no generator seed reached the probe accuracy threshold");
}

namespace {

struct Batch {
    Tensor features;  // [N, encoder_width]
    std::vector<int> labels;
};

Batch load_split(const DatasetManifest& manifest, const EncoderParams& params, Split split,
                 const std::vector<std::string>& classes) {
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < classes.size(); ++i) index[classes[i]] = static_cast<int>(i);
    const auto idx = manifest.indices(split);
    const std::size_t d = params.config.encoder_width;
    Batch b;
    if (idx.empty()) return b;
    b.features = Tensor({idx.size(), d});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto& e = manifest.entries[idx[r]];
        const Tensor h = pooled_hidden(params, load_image(manifest.resolve(e)));
        for (std::size_t j = 0; j < d; ++j) b.features[r * d + j] = h[j];
        auto it = index.find(e.identity);
        b.labels.push_back(it == index.end() ? -1 : it->second);
    }
    return b;
}

struct Logits {
    Var logits;
    Var down, up, head_w, head_b;
};

Logits forward(Tape& tape, const EncoderParams& params, const AttackerModel& m, const Tensor& features) {
    Var f = tape.constant(features);
    Var down = tape.variable(m.adapter_down);
    Var up = tape.variable(m.adapter_up);
    Var head_w = tape.variable(m.head_weight);
    Var head_b = tape.variable(m.head_bias);
    Var proj = ops::add(tape.constant(params.proj_weight), ops::matmul(down, up));
    Var pooled = ops::add_row_bias(ops::matmul(f, proj), tape.constant(params.proj_bias));
    return {ops::add_row_bias(ops::matmul(pooled, head_w), head_b), down, up, head_w, head_b};
}

std::size_t argmax_row(const Tensor& logits, std::size_t r) {
    const std::size_t c = logits.dim(1);
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
        if (logits[r * c + j] > logits[r * c + best]) best = j;
    return best;
}

}  // namespace

AttackerModel train_attacker(const DatasetManifest& manifest, const EncoderParams& params, const ThreatSimConfig& cfg) {
    cfg.validate(params.config);
    const auto train_idx = manifest.indices(Split::train);
    if (train_idx.empty()) throw Error("train_attacker: empty train split");
    std::set<std::string> test_paths;
    for (auto i : manifest.indices(Split::test)) test_paths.insert(manifest.resolve(manifest.entries[i]).string());
    for (auto i : train_idx) {
        if (test_paths.count(manifest.resolve(manifest.entries[i]).string())) {
            throw Error("train_attacker: test image " + manifest.entries[i].path + " appears in the training stream");
        }
    }

    AttackerModel m;
    m.classes = manifest.identities();
    const std::size_t d_e = params.config.encoder_width, d = params.config.projector_width, c = m.classes.size();
    Rng rng(derive_seed(cfg.seed, 0xA77AC));
    m.adapter_down = Tensor({d_e, cfg.rank});
    for (auto& v : m.adapter_down.values()) v = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(d_e)));
    m.adapter_up = Tensor({cfg.rank, d}, 0.0);
    m.head_weight = Tensor({d, c}, 0.0);
    m.head_bias = Tensor({c}, 0.0);

    const Batch batch = load_split(manifest, params, Split::train, m.classes);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Tape tape;
        auto fw = forward(tape, params, m, batch.features);
        Var loss = ops::softmax_cross_entropy(fw.logits, batch.labels);
        if (!std::isfinite(loss.value()[0])) {
            throw Error("train_attacker: loss diverged at epoch " + std::to_string(epoch));
        }
        m.final_loss = loss.value()[0];
        tape.backward(loss);
        auto update = [&](Tensor& param, Var v) {
            const Tensor& g = tape.grad(v);
            for (std::size_t i = 0; i < param.size(); ++i) param[i] -= cfg.learning_rate * g[i];
        };
        update(m.adapter_down, fw.down);
        update(m.adapter_up, fw.up);
        update(m.head_weight, fw.head_w);
        update(m.head_bias, fw.head_b);
    }
    return m;
}

std::size_t predict_identity(const AttackerModel& model, const EncoderParams& params, const Image& image) {
    const Tensor h = pooled_hidden(params, image);
    Tape tape;
    auto fw = forward(tape, params, model, h.reshaped({1, h.size()}));
    return argmax_row(fw.logits.value(), 0);
}

AttackReport evaluate_attack(const AttackerModel& model, const DatasetManifest& manifest, const EncoderParams& params,
                             double ratio) {
    AttackReport rep;
    rep.ratio = ratio;
    rep.classes = model.classes;
    const std::size_t c = model.classes.size();
    rep.confusion.assign(c, std::vector<std::size_t>(c, 0));
    auto accuracy = [&](Split split, bool record) {
        const Batch b = load_split(manifest, params, split, model.classes);
        if (b.labels.empty()) return 0.0;
        Tape tape;
        auto fw = forward(tape, params, model, b.features);
        std::size_t correct = 0;
        for (std::size_t r = 0; r < b.labels.size(); ++r) {
            const std::size_t pred = argmax_row(fw.logits.value(), r);
            if (b.labels[r] >= 0 && pred == static_cast<std::size_t>(b.labels[r])) ++correct;
            if (record && b.labels[r] >= 0) rep.confusion[static_cast<std::size_t>(b.labels[r])][pred]++;
        }
        return 100.0 * static_cast<double>(correct) / static_cast<double>(b.labels.size());
    };
    rep.train_accuracy = accuracy(Split::train, false);
    rep.test_accuracy = accuracy(Split::test, true);
    return rep;
}

std::vector<AttackSweepRow> attack_sweep(const DatasetManifest& clean, const DatasetManifest& protected_all,
                                         const std::vector<double>& ratios, std::uint64_t selection_seed,
                                         const EncoderParams& params, const ThreatSimConfig& cfg,
                                         std::size_t workers) {
    std::vector<AttackSweepRow> rows(ratios.size());
    parallel_for(ratios.size(), workers, [&](std::size_t i) {
        const auto selected = select_for_protection(clean, ratios[i], selection_seed);
        const auto mixed = mix_manifest(clean, protected_all, selected);
        const auto model = train_attacker(mixed, params, cfg);
        rows[i] = {ratios[i], evaluate_attack(model, mixed, params, ratios[i])};
    });
    return rows;
}

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

void write_attack_csv(const std::vector<AttackSweepRow>& rows, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("write_attack_csv: cannot open " + path.string());
    out << "ratio,asr_id,train_accuracy\n";
    for (const auto& r : rows) out << num(r.ratio) << ',' << num(r.report.test_accuracy) << ',' << num(r.report.train_accuracy) << '\n';
}

void write_attack_json(const std::vector<AttackSweepRow>& rows, const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
        j.push_back({{"ratio", r.ratio},
                     {"asr_id", r.report.test_accuracy},
                     {"train_accuracy", r.report.train_accuracy},
                     {"classes", r.report.classes},
                     {"confusion", r.report.confusion}});
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("write_attack_json: cannot open " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace featshield
