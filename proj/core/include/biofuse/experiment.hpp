#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "biofuse/config.hpp"

namespace biofuse::experiment {

// Global CLI flags; each overrides the config file field of the same name.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> threads;
    std::optional<std::size_t> factor;
};

// Subcommand entry points, shared by the CLI and the test suites. All of
// them throw ConfigError for bad configuration (CLI exit 2) and other
// exceptions for runtime failures (exit 1). Primary artifacts are
// byte-deterministic; wall-clock times go to a timestamps.txt sidecar.
void cmd_synth(const config::KeyValueConfig& cfg, const Overrides& ov);
void cmd_prep(const config::KeyValueConfig& cfg, const Overrides& ov);
void cmd_run(const config::KeyValueConfig& cfg, const Overrides& ov);
void cmd_eval(const config::KeyValueConfig& cfg, const Overrides& ov);
void cmd_ablate(const config::KeyValueConfig& cfg, const Overrides& ov);
void cmd_stats(const std::vector<std::string>& eval_files, const std::string& condition,
               std::size_t factor, const std::string& out_path);
void cmd_report(const std::string& results_dir, const std::string& out_dir);

}  // namespace biofuse::experiment
