#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "featshield/encoder.hpp"
#include "featshield/manifest.hpp"
#include "featshield/objective.hpp"
#include "featshield/pgd.hpp"

namespace featshield {

/// Train-entry indices to protect: a seeded shuffle of the train entries,
/// truncated to round(ratio * n_train). For one seed, a larger ratio selects a superset.
std::vector<std::size_t> select_for_protection(const DatasetManifest& manifest, double ratio, std::uint64_t seed);

/// Per-image seed used for PGD and EOT sampling; stable in the entry index.
std::uint64_t entry_seed(std::uint64_t master, std::size_t entry_index);

/// Scalar diagnostics of one protected entry (one JSON line each).
struct ProtectionRecord {
    std::size_t index = 0;
    std::string path;
    std::string identity;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double initial_cos_base = 0.0;
    double final_cos_base = 0.0;
    double final_cos_target = 0.0;
    double linf = 0.0;            // continuous iterate
    double linf_exported = 0.0;   // after 8-bit export
    double psnr_db = 0.0;         // of the exported image
    std::size_t feasibility_violations = 0;
    double wall_seconds = 0.0;
};

struct ProtectOptions {
    double ratio = 1.0;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::filesystem::path out_dir;
    /// Receives each finished record; called from the thread that finished it.
    std::function<void(const ProtectionRecord&)> on_record;
};

struct ProtectOutcome {
    DatasetManifest manifest;              // released dataset, root = out_dir
    std::vector<ProtectionRecord> records;  // in entry order
    std::vector<std::string> failures;      // "path: reason"
};

/// Releases the dataset under out_dir: unselected images are copied byte for byte,
/// selected train entries are replaced by their protected versions. Failures are
/// collected per entry and do not stop the run.
ProtectOutcome protect_dataset(const DatasetManifest& manifest, const EncoderParams& params, const ObjectiveConfig& obj,
                               const PgdConfig& pgd, const ProtectOptions& options);

/// Manifest identical to `clean` except selected entries point at `protected_all`'s images.
DatasetManifest mix_manifest(const DatasetManifest& clean, const DatasetManifest& protected_all,
                             const std::vector<std::size_t>& selected);

struct GfdsStats {
    std::size_t samples = 0;
    Tensor clean_centroid;
    Tensor protected_centroid;
    double centroid_cos = 0.0;
    double centroid_displacement = 0.0;
    double mean_pair_cos = 0.0;   // mean cos(u_clean_i, u_protected_i) of pooled unit embeddings
    double intra_clean_std = 0.0;
    double separation_ratio = 0.0;
};

struct GfdsPoint {
    std::size_t entry = 0;
    std::string identity;
    bool protected_group = false;
    double x = 0.0, y = 0.0;
};

struct GfdsReport {
    GfdsStats global;
    std::vector<std::pair<std::string, std::optional<GfdsStats>>> per_identity;  // nullopt: < 2 protected samples
    /// Centroid shift of the whole released train split versus the clean train split.
    double mixed_train_displacement = 0.0;
    /// Mean cos(vec z_released, vec z_clean) over protected entries.
    double mean_full_cos = 0.0;
    std::vector<GfdsPoint> projection;
};

/// Statistics for two paired groups of pooled unit embeddings (rows of [N,D] tensors).
GfdsStats gfds_stats(const Tensor& clean_units, const Tensor& protected_units);

/// Compares each protected entry of `released` against the same entry of `clean`
/// (matched by index). `post` is applied to released protected images first.
GfdsReport compute_gfds(const DatasetManifest& clean, const DatasetManifest& released, const EncoderParams& params,
                        const TransformSpec& post = TransformSpec::identity(), std::uint64_t seed = 0);

struct RobustnessRow {
    std::string op;
    double mean_cos_base = 0.0;
    double separation_ratio = 0.0;
    double centroid_displacement = 0.0;
};

std::vector<RobustnessRow> robustness_sweep(const DatasetManifest& clean, const DatasetManifest& released,
                                            const EncoderParams& params, const std::vector<TransformSpec>& ops,
                                            std::uint64_t seed = 0);

void write_robustness_csv(const std::vector<RobustnessRow>& rows, const std::filesystem::path& path);
void write_gfds_json(const GfdsReport& report, const std::filesystem::path& path);
void write_gfds_csv(const GfdsReport& report, const std::filesystem::path& path);
void write_projection_svg(const GfdsReport& report, const std::filesystem::path& path);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception is rethrown after joining.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace featshield
