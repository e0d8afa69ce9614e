#include "featshield/dataset.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "featshield/pca.hpp"
#include "featshield/random.hpp"

namespace featshield {

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::vector<std::size_t> select_for_protection(const DatasetManifest& manifest, double ratio, std::uint64_t seed) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error("protection ratio must lie in [0,1]");
    auto train = manifest.indices(Split::train);
    Rng rng(derive_seed(seed, 0x5E1EC7));
    for (std::size_t i = train.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(train[i - 1], train[j]);
    }
    const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(train.size())));
    train.resize(count);
    std::sort(train.begin(), train.end());
    return train;
}

std::uint64_t entry_seed(std::uint64_t master, std::size_t entry_index) { return derive_seed(master, entry_index); }

namespace {

std::string released_path(const ManifestEntry& e, std::size_t index) {
    const std::filesystem::path p(e.path);
    if (!p.is_absolute()) return e.path;
    return (std::filesystem::path("images") / (std::to_string(index) + "_" + p.filename().string())).string();
}

}  // namespace

ProtectOutcome protect_dataset(const DatasetManifest& manifest, const EncoderParams& params, const ObjectiveConfig& obj,
                               const PgdConfig& pgd, const ProtectOptions& options) {
    manifest.validate();
    obj.validate();
    pgd.validate();
    if (options.out_dir.empty()) throw Error("protect_dataset: output directory required");
    const auto selected = select_for_protection(manifest, options.ratio, options.seed);

    ProtectOutcome outcome;
    outcome.manifest.root = options.out_dir;
    outcome.manifest.entries = manifest.entries;
    std::vector<char> is_selected(manifest.entries.size(), 0);
    for (auto i : selected) is_selected[i] = 1;

    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        auto& e = outcome.manifest.entries[i];
        e.path = released_path(manifest.entries[i], i);
        e.protected_flag = is_selected[i] != 0;
        if (e.protected_flag) continue;
        const auto src = manifest.resolve(manifest.entries[i]);
        const auto dst = outcome.manifest.resolve(e);
        try {
            std::filesystem::create_directories(dst.parent_path());
            if (std::filesystem::exists(dst) && std::filesystem::equivalent(src, dst)) continue;
            std::filesystem::copy_file(src, dst, std::filesystem::copy_options::overwrite_existing);
        } catch (const std::exception& ex) {
            outcome.failures.push_back(manifest.entries[i].path + ": " + ex.what());
        }
    }

    std::vector<std::optional<ProtectionRecord>> records(selected.size());
    std::vector<std::string> errors(selected.size());
    parallel_for(selected.size(), options.workers, [&](std::size_t k) {
        const std::size_t idx = selected[k];
        const auto& src_entry = manifest.entries[idx];
        try {
            const Image x = load_image(manifest.resolve(src_entry));
            PgdConfig cfg = pgd;
            cfg.seed = entry_seed(options.seed, idx);
            cfg.eot.seed = derive_seed(cfg.seed, 1);
            const auto res = protect_image(x, params, obj, cfg);
            const auto dst = outcome.manifest.resolve(outcome.manifest.entries[idx]);
            save_image(res.protected_image, dst);
            const Image exported = quantize_8bit(res.protected_image);
            ProtectionRecord rec;
            rec.index = idx;
            rec.path = outcome.manifest.entries[idx].path;
            rec.identity = src_entry.identity;
            rec.initial_loss = res.initial_loss;
            rec.final_loss = res.final_loss;
            rec.initial_cos_base = res.initial_cos_base;
            rec.final_cos_base = res.final_cos_base;
            rec.final_cos_target = res.final_cos_target;
            rec.linf = res.linf;
            rec.linf_exported = linf_distance(exported, x);
            rec.psnr_db = psnr(exported, x).value_or(INFINITY);
            rec.feasibility_violations = res.feasibility_violations;
            rec.wall_seconds = res.wall_seconds;
            if (options.on_record) options.on_record(rec);
            records[k] = std::move(rec);
        } catch (const std::exception& ex) {
            errors[k] = src_entry.path + ": " + ex.what();
        }
    });
    for (std::size_t k = 0; k < selected.size(); ++k) {
        if (records[k]) {
            outcome.records.push_back(std::move(*records[k]));
        } else {
            outcome.failures.push_back(errors[k]);
        }
    }
    return outcome;
}

DatasetManifest mix_manifest(const DatasetManifest& clean, const DatasetManifest& protected_all,
                             const std::vector<std::size_t>& selected) {
    if (clean.entries.size() != protected_all.entries.size()) {
        throw Error("mix_manifest: manifests have different lengths");
    }
    DatasetManifest out = clean;
    for (auto& e : out.entries) {
        e.path = clean.resolve(e).string();
        e.protected_flag = false;
    }
    for (auto i : selected) {
        const auto& p = protected_all.entries.at(i);
        if (!p.protected_flag) throw Error("mix_manifest: entry " + p.path + " has no protected version");
        out.entries[i].path = protected_all.resolve(p).string();
        out.entries[i].protected_flag = true;
    }
    return out;
}

namespace {

double norm(const Tensor& v) {
    double s = 0.0;
    for (double x : v.values()) s += x * x;
    return std::sqrt(s);
}

Tensor row(const Tensor& m, std::size_t i) {
    const std::size_t d = m.dim(1);
    return Tensor({d}, std::vector<double>(m.values().begin() + static_cast<std::ptrdiff_t>(i * d),
                                           m.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * d)));
}

Tensor centroid(const Tensor& m) {
    const std::size_t n = m.dim(0), d = m.dim(1);
    Tensor c({d}, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) c[j] += m[i * d + j];
    for (auto& v : c.values()) v /= static_cast<double>(n);
    return c;
}

Tensor stack(const std::vector<Tensor>& rows) {
    const std::size_t d = rows.front().size();
    Tensor out({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = rows[i][j];
    return out;
}

}  // namespace

GfdsStats gfds_stats(const Tensor& clean_units, const Tensor& protected_units) {
    require_same_shape("gfds_stats", clean_units.shape(), protected_units.shape());
    if (clean_units.rank() != 2 || clean_units.dim(0) < 2) {
        throw Error("gfds_stats: need at least 2 samples per group");
    }
    const std::size_t n = clean_units.dim(0);
    GfdsStats s;
    s.samples = n;
    s.clean_centroid = centroid(clean_units);
    s.protected_centroid = centroid(protected_units);
    s.centroid_cos = cos_sim(s.clean_centroid, s.protected_centroid);
    Tensor diff(s.clean_centroid.shape());
    for (std::size_t j = 0; j < diff.size(); ++j) diff[j] = s.protected_centroid[j] - s.clean_centroid[j];
    s.centroid_displacement = norm(diff);
    double pair = 0.0, spread = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor c = row(clean_units, i);
        pair += cos_sim(c, row(protected_units, i));
        for (std::size_t j = 0; j < c.size(); ++j) {
            const double d = c[j] - s.clean_centroid[j];
            spread += d * d;
        }
    }
    s.mean_pair_cos = pair / static_cast<double>(n);
    s.intra_clean_std = std::sqrt(spread / static_cast<double>(n));
    if (s.centroid_displacement == 0.0) {
        s.separation_ratio = 0.0;
    } else {
        s.separation_ratio = s.intra_clean_std > 0.0 ? s.centroid_displacement / s.intra_clean_std : INFINITY;
    }
    return s;
}

GfdsReport compute_gfds(const DatasetManifest& clean, const DatasetManifest& released, const EncoderParams& params,
                        const TransformSpec& post, std::uint64_t seed) {
    if (clean.entries.size() != released.entries.size()) {
        throw Error("compute_gfds: clean and released manifests have different lengths");
    }
    for (std::size_t i = 0; i < clean.entries.size(); ++i) {
        if (clean.entries[i].identity != released.entries[i].identity ||
            clean.entries[i].split != released.entries[i].split) {
            throw Error("compute_gfds: manifests disagree at entry " + std::to_string(i));
        }
    }

    struct Sample {
        std::size_t entry;
        Tensor clean_unit, released_unit;
        double full_cos;
    };
    std::vector<Sample> prot;
    std::vector<Tensor> clean_train, released_train;
    for (std::size_t i = 0; i < clean.entries.size(); ++i) {
        const auto& ce = clean.entries[i];
        if (ce.split != Split::train) continue;
        const Tensor z_clean = embed(params, load_image(clean.resolve(ce)));
        const Tensor u_clean = pooled_unit_embedding(z_clean);
        clean_train.push_back(u_clean);
        const auto& re = released.entries[i];
        if (!re.protected_flag) {
            released_train.push_back(u_clean);
            continue;
        }
        const Image released_img = apply_transform(post.with_seed(entry_seed(seed, i) ^ post.seed()),
                                                   load_image(released.resolve(re)));
        const Tensor z_rel = embed(params, released_img);
        const Tensor u_rel = pooled_unit_embedding(z_rel);
        released_train.push_back(u_rel);
        prot.push_back({i, u_clean, u_rel, cos_sim(z_rel, z_clean)});
    }
    if (prot.size() < 2) throw Error("compute_gfds: fewer than 2 protected samples");

    GfdsReport report;
    std::vector<Tensor> cu, pu;
    double full = 0.0;
    for (const auto& s : prot) {
        cu.push_back(s.clean_unit);
        pu.push_back(s.released_unit);
        full += s.full_cos;
    }
    report.global = gfds_stats(stack(cu), stack(pu));
    report.mean_full_cos = full / static_cast<double>(prot.size());

    const Tensor ct = centroid(stack(clean_train));
    const Tensor rt = centroid(stack(released_train));
    double disp = 0.0;
    for (std::size_t j = 0; j < ct.size(); ++j) disp += (rt[j] - ct[j]) * (rt[j] - ct[j]);
    report.mixed_train_displacement = std::sqrt(disp);

    std::map<std::string, std::pair<std::vector<Tensor>, std::vector<Tensor>>> by_id;
    for (const auto& id : clean.identities()) by_id[id];
    for (const auto& s : prot) {
        auto& g = by_id[clean.entries[s.entry].identity];
        g.first.push_back(s.clean_unit);
        g.second.push_back(s.released_unit);
    }
    for (auto& [id, g] : by_id) {
        if (g.first.size() < 2) {
            report.per_identity.emplace_back(id, std::nullopt);
        } else {
            report.per_identity.emplace_back(id, gfds_stats(stack(g.first), stack(g.second)));
        }
    }

    std::vector<Tensor> all = cu;
    all.insert(all.end(), pu.begin(), pu.end());
    const auto pca = pca_power_iteration(stack(all), 2, 100, seed);
    for (std::size_t i = 0; i < all.size(); ++i) {
        const auto& s = prot[i % prot.size()];
        report.projection.push_back(
            {s.entry, clean.entries[s.entry].identity, i >= prot.size(), pca.coords[i * 2], pca.coords[i * 2 + 1]});
    }
    return report;
}

std::vector<RobustnessRow> robustness_sweep(const DatasetManifest& clean, const DatasetManifest& released,
                                            const EncoderParams& params, const std::vector<TransformSpec>& ops,
                                            std::uint64_t seed) {
    if (released.protected_count() == 0) throw Error("robustness_sweep: manifest has no protected entries");
    std::vector<RobustnessRow> rows;
    for (const auto& op : ops) {
        const auto report = compute_gfds(clean, released, params, op, seed);
        rows.push_back({op.label(), report.mean_full_cos, report.global.separation_ratio,
                        report.global.centroid_displacement});
    }
    return rows;
}

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

nlohmann::json stats_json(const GfdsStats& s) {
    return {{"samples", s.samples},
            {"centroid_cos", s.centroid_cos},
            {"centroid_displacement", s.centroid_displacement},
            {"mean_pair_cos", s.mean_pair_cos},
            {"intra_clean_std", s.intra_clean_std},
            {"separation_ratio", std::isfinite(s.separation_ratio) ? nlohmann::json(s.separation_ratio)
                                                                    : nlohmann::json("inf")},
            {"clean_centroid", s.clean_centroid.values()},
            {"protected_centroid", s.protected_centroid.values()}};
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    return out;
}

}  // namespace

void write_robustness_csv(const std::vector<RobustnessRow>& rows, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "op,mean_cos_base,separation_ratio,centroid_displacement\n";
    for (const auto& r : rows) {
        out << csv_escape(r.op) << ',' << num(r.mean_cos_base) << ',' << num(r.separation_ratio) << ','
            << num(r.centroid_displacement) << '\n';
    }
}

void write_gfds_json(const GfdsReport& report, const std::filesystem::path& path) {
    nlohmann::json j;
    j["global"] = stats_json(report.global);
    j["mixed_train_displacement"] = report.mixed_train_displacement;
    j["mean_full_cos"] = report.mean_full_cos;
    nlohmann::json ids = nlohmann::json::object();
    for (const auto& [id, s] : report.per_identity) ids[id] = s ? stats_json(*s) : nlohmann::json(nullptr);
    j["per_identity"] = ids;
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

void write_gfds_csv(const GfdsReport& report, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "group,samples,centroid_cos,centroid_displacement,mean_pair_cos,intra_clean_std,separation_ratio\n";
    auto line = [&](const std::string& name, const GfdsStats& s) {
        out << csv_escape(name) << ',' << s.samples << ',' << num(s.centroid_cos) << ','
            << num(s.centroid_displacement) << ',' << num(s.mean_pair_cos) << ',' << num(s.intra_clean_std) << ','
            << num(s.separation_ratio) << '\n';
    };
    line("global", report.global);
    for (const auto& [id, s] : report.per_identity)
        if (s) line(id, *s);
}

void write_projection_svg(const GfdsReport& report, const std::filesystem::path& path) {
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& p : report.projection) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    const double size = 480.0, margin = 20.0;
    const double sx = (xmax > xmin) ? (size - 2 * margin) / (xmax - xmin) : 1.0;
    const double sy = (ymax > ymin) ? (size - 2 * margin) / (ymax - ymin) : 1.0;
    auto out = open_out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\" viewBox=\"0 0 480 480\">\n";
    out << "<rect width=\"480\" height=\"480\" fill=\"white\"/>\n";
    for (const auto& p : report.projection) {
        const double cx = margin + (p.x - xmin) * sx;
        const double cy = size - margin - (p.y - ymin) * sy;
        out << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"3\" fill=\""
            << (p.protected_group ? "#d62728" : "#1f77b4") << "\"><title>" << p.identity << "</title></circle>\n";
    }
    out << "</svg>\n";
}

}  // namespace featshield
