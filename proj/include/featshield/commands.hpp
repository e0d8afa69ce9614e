#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "featshield/config.hpp"

namespace featshield {

enum ExitCode : int { kExitOk = 0, kExitPartial = 1, kExitUsage = 2 };

/// Level names as accepted by the FEATSHIELD_LOG_LEVEL environment variable.
void configure_logging(const std::string& level);

/// Output directory: config.json, manifest.csv, images/, diagnostics.jsonl.
int cmd_protect(const RunConfig& cfg);
/// Output directory: config.json, gfds.json, gfds.csv, robustness.csv, projection.svg.
int cmd_evaluate(const RunConfig& cfg);
/// Output directory: config.json, attack.csv, attack.json, plus data/ and protected/
/// when the clean set has to be generated or protected first.
int cmd_simulate_attack(const RunConfig& cfg);
/// Output directory: config.json, manifest.csv, images/, dataset.json.
int cmd_gen_data(const RunConfig& cfg);
/// Prints linf, PSNR and cos(z_base(a), z_base(b)) to `out`.
int cmd_inspect(const RunConfig& cfg, const std::filesystem::path& a, const std::filesystem::path& b, std::ostream& out);

}  // namespace featshield
