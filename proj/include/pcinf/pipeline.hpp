#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pcinf {

inline constexpr const char* kLibraryVersion = "0.1.0";

// Everything a run needs; file values are overridden by CLI flags.
struct RunConfig {
    std::string prices_path;
    std::string sectors_path;
    std::string index_ticker;
    double liquidity_cutoff = 0.06;
    double level = 0.02;  // two-tailed, the default used throughout
    std::string method = "shuffle";  // shuffle | fisher | none
    std::size_t replicates = 10;
    std::uint64_t seed = 12345;
    std::optional<std::size_t> segment_length;
    std::size_t max_triples_per_replicate = 1'000'000;
    std::string aggregation = "outgoing";  // outgoing | incoming
    bool filtered = true;
    bool dense_export = false;  // also dump the dense binary tensor (N <= 60)
    std::size_t min_quarter_days = 20;
    int jobs = 0;
    std::string out_dir = ".";

    void validate() const;  // throws ConfigError
};

// Plain key=value file, '#' comments; unknown keys are rejected.
RunConfig parse_config_file(const std::string& path);
void apply_config_line(RunConfig& config, const std::string& key, const std::string& value);

struct StageTiming {
    std::string stage;
    double milliseconds;
};

struct RunManifest {
    std::string command;
    RunConfig config;
    std::vector<std::pair<std::string, std::string>> input_digests;  // path -> hex digest
    std::vector<StageTiming> timings;
    std::vector<std::string> diagnostics;

    // Stable digest over command, config, inputs, and library version;
    // timings and diagnostics are excluded.
    std::string digest() const;
    void write(const std::string& path) const;
};

// FNV-1a 64 over a file's bytes, as a hex string.
std::string file_digest(const std::string& path);

// Subcommand drivers; each writes its exports plus a manifest under
// config.out_dir and returns the manifest.
RunManifest run_ingest(const RunConfig& config);
RunManifest run_influence(const RunConfig& config);
RunManifest run_stability(const RunConfig& config);
RunManifest run_sectors(const RunConfig& config);
std::vector<RunManifest> run_report(const RunConfig& config);

}  // namespace pcinf
