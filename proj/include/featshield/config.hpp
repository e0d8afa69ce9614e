#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "featshield/encoder.hpp"
#include "featshield/objective.hpp"
#include "featshield/pgd.hpp"
#include "featshield/threat_sim.hpp"
#include "featshield/transforms.hpp"

namespace featshield {

/// Everything a CLI run needs. Loaded from a JSON file; missing keys keep their
/// defaults, unknown keys are rejected. Command-line flags override file values.
struct RunConfig {
    std::uint64_t seed = 0;
    EncoderConfig encoder;
    std::optional<std::filesystem::path> encoder_weights;  // else weights come from init_encoder(encoder)
    ObjectiveConfig objective;
    PgdConfig pgd;
    bool eot_enabled = false;
    EotPolicy eot = EotPolicy::default_policy(0);

    std::optional<std::filesystem::path> manifest;           // input (clean) manifest
    std::optional<std::filesystem::path> released_manifest;  // evaluate: output of protect
    double ratio = 1.0;
    std::vector<double> ratios{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    std::filesystem::path out = "featshield-out";
    std::size_t workers = 1;
    std::string log_level = "info";

    std::vector<TransformSpec> evaluate_ops{TransformSpec::identity()};
    bool write_svg = true;

    ThreatSimConfig attack;
    SyntheticIdentityConfig synthetic;
    double min_probe_accuracy = 90.0;

    /// Applies the seed to every seeded sub-config and checks ranges. Paths that
    /// a command needs are checked by that command.
    void validate() const;
    /// PGD config with the EOT policy applied (identity-only when disabled).
    PgdConfig effective_pgd() const;
};

/// Parses a JSON document; relative paths resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

/// Writes config.json (fully resolved) into `dir`.
void write_config_echo(const RunConfig& cfg, const std::filesystem::path& dir);

/// Loads the configured weights file or initializes from the encoder config and seed.
EncoderParams resolve_encoder(const RunConfig& cfg);

}  // namespace featshield
