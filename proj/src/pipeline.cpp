#include "pcinf/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>

#include "pcinf/correlation.hpp"
#include "pcinf/csv.hpp"
#include "pcinf/errors.hpp"
#include "pcinf/influence_metrics.hpp"
#include "pcinf/market_data.hpp"
#include "pcinf/sector.hpp"
#include "pcinf/significance.hpp"
#include "pcinf/stability.hpp"

namespace pcinf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kStage = "cli";

class StageClock {
public:
    explicit StageClock(RunManifest& manifest) : manifest_(manifest) {}
    template <typename F>
    auto time(const std::string& stage, F&& f) {
        auto start = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            record(stage, start);
        } else {
            auto result = f();
            record(stage, start);
            return result;
        }
    }

private:
    void record(const std::string& stage,
                std::chrono::steady_clock::time_point start) {
        double ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
        manifest_.timings.push_back({stage, ms});
    }
    RunManifest& manifest_;
};

json config_to_json(const RunConfig& c) {
    json j;
    j["prices"] = c.prices_path;
    j["sectors"] = c.sectors_path;
    j["index_ticker"] = c.index_ticker;
    j["liquidity_cutoff"] = c.liquidity_cutoff;
    j["level"] = c.level;
    j["method"] = c.method;
    j["replicates"] = c.replicates;
    j["seed"] = c.seed;
    j["segment_length"] = c.segment_length ? json(*c.segment_length) : json(nullptr);
    j["max_triples_per_replicate"] = c.max_triples_per_replicate;
    j["aggregation"] = c.aggregation;
    j["filtered"] = c.filtered;
    j["dense_export"] = c.dense_export;
    j["min_quarter_days"] = c.min_quarter_days;
    j["out"] = c.out_dir;
    return j;
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

std::string out_path(const RunConfig& config, const std::string& name) {
    fs::create_directories(config.out_dir);
    return (fs::path(config.out_dir) / name).string();
}

AggregationDirection direction_of(const RunConfig& config) {
    return config.aggregation == "incoming" ? AggregationDirection::incoming
                                            : AggregationDirection::outgoing;
}

ReturnPanel load_panel_artifact(const RunConfig& config, RunManifest& manifest) {
    std::string path = out_path(config, "returns.csv");
    if (!fs::exists(path)) {
        throw ConfigError(kStage, "missing_artifact",
                          "return panel artifact not found at " + path +
                              "; run the ingest subcommand first");
    }
    manifest.input_digests.emplace_back(path, file_digest(path));
    return read_return_panel_csv(path);
}

// Shared by the influence and sectors subcommands: full-sample influence
// matrix under the configured significance method.
struct InfluenceArtifacts {
    PartialCorrelationMatrix partial;
    std::optional<ThresholdTable> thresholds;
    InfluenceTensor tensor;  // surviving entries under the configured filter
    InfluenceMatrix matrix;
};

InfluenceArtifacts build_influence(const ReturnPanel& panel, const RunConfig& config,
                                   StageClock& clock) {
    InfluenceArtifacts art;
    art.partial = clock.time("partial_correlations", [&] {
        return partial_on_index_matrix(correlation_matrix(panel));
    });
    if (!config.filtered || config.method == "none") {
        art.matrix = clock.time("influence_matrix", [&] {
            return stock_influence_unfiltered(art.partial, config.jobs);
        });
        return art;
    }
    if (config.method == "fisher") {
        art.tensor = clock.time("fisher_filter", [&] {
            return fisher_filtered_tensor(art.partial,
                                          static_cast<std::size_t>(panel.returns.rows()),
                                          config.level, config.jobs);
        });
    } else {
        art.thresholds = clock.time("shuffle_thresholds", [&] {
            ShuffleOptions opts;
            opts.levels = {0.01, 0.02, 0.05, 0.10, 0.20};
            if (std::find(opts.levels.begin(), opts.levels.end(), config.level) ==
                opts.levels.end()) {
                opts.levels.push_back(config.level);
            }
            opts.replicates = config.replicates;
            opts.seed = config.seed;
            opts.max_triples_per_replicate = config.max_triples_per_replicate;
            opts.segment_length = config.segment_length;
            opts.jobs = config.jobs;
            return empirical_thresholds(panel, opts);
        });
        art.tensor = clock.time("influence_tensor", [&] {
            TensorOptions topts;
            topts.storage = TensorStorage::significant_only;
            topts.threshold = art.thresholds->threshold_for(config.level);
            topts.jobs = config.jobs;
            return compute_influence_tensor(art.partial, topts);
        });
    }
    art.matrix = clock.time("influence_matrix", [&] {
        return stock_influence(art.tensor, AggregationMode::filtered);
    });
    return art;
}

}  // namespace

void RunConfig::validate() const {
    if (level <= 0.0 || level > 0.5) {
        throw ConfigError(kStage, "bad_level", "significance level must lie in (0, 0.5]");
    }
    if (method != "shuffle" && method != "fisher" && method != "none") {
        throw ConfigError(kStage, "bad_method",
                          "significance method must be shuffle, fisher, or none");
    }
    if (aggregation != "outgoing" && aggregation != "incoming") {
        throw ConfigError(kStage, "bad_aggregation",
                          "aggregation must be outgoing or incoming");
    }
    if (liquidity_cutoff < 0.0 || liquidity_cutoff > 1.0) {
        throw ConfigError(kStage, "bad_cutoff", "liquidity cutoff must lie in [0,1]");
    }
    if (replicates < 1) {
        throw ConfigError(kStage, "bad_replicates", "replicates must be >= 1");
    }
}

void apply_config_line(RunConfig& config, const std::string& key, const std::string& value) {
    auto to_size = [&](const std::string& v) {
        return static_cast<std::size_t>(csv::parse_long(v, kStage, 0));
    };
    if (key == "prices") {
        config.prices_path = value;
    } else if (key == "sectors") {
        config.sectors_path = value;
    } else if (key == "index_ticker") {
        config.index_ticker = value;
    } else if (key == "liquidity_cutoff") {
        config.liquidity_cutoff = csv::parse_double(value, kStage, 0);
    } else if (key == "level") {
        config.level = csv::parse_double(value, kStage, 0);
    } else if (key == "method") {
        config.method = value;
    } else if (key == "replicates") {
        config.replicates = to_size(value);
    } else if (key == "seed") {
        config.seed = static_cast<std::uint64_t>(csv::parse_long(value, kStage, 0));
    } else if (key == "segment_length") {
        config.segment_length = value.empty() ? std::nullopt
                                              : std::optional<std::size_t>(to_size(value));
    } else if (key == "max_triples_per_replicate") {
        config.max_triples_per_replicate = to_size(value);
    } else if (key == "aggregation") {
        config.aggregation = value;
    } else if (key == "filtered") {
        config.filtered = (value == "true" || value == "1");
    } else if (key == "dense_export") {
        config.dense_export = (value == "true" || value == "1");
    } else if (key == "min_quarter_days") {
        config.min_quarter_days = to_size(value);
    } else if (key == "jobs") {
        config.jobs = static_cast<int>(csv::parse_long(value, kStage, 0));
    } else if (key == "out") {
        config.out_dir = value;
    } else {
        throw ConfigError(kStage, "unknown_key", "unknown config key '" + key + "'");
    }
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(kStage, "missing_file", "cannot open config file " + path);
    RunConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto stripped = std::string(csv::strip_cr(line));
        auto hash = stripped.find('#');
        if (hash != std::string::npos) stripped.resize(hash);
        // trim
        auto first = stripped.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        auto last = stripped.find_last_not_of(" \t");
        stripped = stripped.substr(first, last - first + 1);
        auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(kStage, "parse_error",
                              path + ": line " + std::to_string(line_no) + ": expected key=value");
        }
        std::string key = stripped.substr(0, eq);
        std::string value = stripped.substr(eq + 1);
        auto trim = [](std::string& s) {
            auto b = s.find_first_not_of(" \t");
            auto e = s.find_last_not_of(" \t");
            s = (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
        };
        trim(key);
        trim(value);
        apply_config_line(config, key, value);
    }
    return config;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(kStage, "missing_file", "cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
    }
    return hex64(h);
}

std::string RunManifest::digest() const {
    json j;
    j["command"] = command;
    j["config"] = config_to_json(config);
    json inputs = json::object();
    for (const auto& [path, d] : input_digests) inputs[path] = d;
    j["inputs"] = inputs;
    j["library_version"] = kLibraryVersion;
    std::string dump = j.dump();
    return hex64(fnv1a(dump.data(), dump.size()));
}

void RunManifest::write(const std::string& path) const {
    json j;
    j["command"] = command;
    j["config"] = config_to_json(config);
    json inputs = json::object();
    for (const auto& [p, d] : input_digests) inputs[p] = d;
    j["inputs"] = inputs;
    j["library_version"] = kLibraryVersion;
    json timings_json = json::object();
    for (const auto& t : timings) timings_json[t.stage] = t.milliseconds;
    j["timings_ms"] = timings_json;
    j["diagnostics"] = diagnostics;
    j["digest"] = digest();
    std::ofstream out(path);
    if (!out) throw ConfigError(kStage, "io_error", "cannot write " + path);
    out << j.dump(2) << '\n';
}

RunManifest run_ingest(const RunConfig& config) {
    config.validate();
    if (config.prices_path.empty()) {
        throw ConfigError(kStage, "missing_input", "no price file configured");
    }
    if (config.index_ticker.empty()) {
        throw ConfigError(kStage, "missing_input", "no index ticker configured");
    }
    RunManifest manifest;
    manifest.command = "ingest";
    manifest.config = config;
    manifest.input_digests.emplace_back(config.prices_path, file_digest(config.prices_path));
    StageClock clock(manifest);

    auto ingest = clock.time("load_prices", [&] { return load_prices(config.prices_path); });
    auto [filtered, reports] = clock.time("filter_illiquid", [&] {
        return filter_illiquid(ingest.panel, config.liquidity_cutoff);
    });
    auto panel = clock.time("log_returns", [&] {
        return log_returns(filtered, config.index_ticker);
    });

    clock.time("exports", [&] {
        write_return_panel_csv(panel, out_path(config, "returns.csv"));
        write_liquidity_reports(reports, out_path(config, "liquidity_report.csv"));
        write_ingest_log(ingest.log, out_path(config, "ingest_log.ndjson"));
    });
    std::size_t retained = 0;
    for (const auto& r : reports) retained += r.retained ? 1 : 0;
    manifest.diagnostics.push_back("tickers retained by liquidity filter: " +
                                   std::to_string(retained) + " of " +
                                   std::to_string(reports.size()));
    manifest.write(out_path(config, "manifest_ingest.json"));
    return manifest;
}

RunManifest run_influence(const RunConfig& config) {
    config.validate();
    RunManifest manifest;
    manifest.command = "influence";
    manifest.config = config;
    StageClock clock(manifest);
    ReturnPanel panel = load_panel_artifact(config, manifest);

    auto art = build_influence(panel, config, clock);
    auto totals = total_influence(art.matrix, direction_of(config));
    auto ranking = rank_by_influence(totals, "full_sample");

    clock.time("exports", [&] {
        if (art.thresholds) {
            write_threshold_table_csv(*art.thresholds, out_path(config, "thresholds.csv"));
            write_null_moments_json(*art.thresholds, out_path(config, "null_moments.json"));
        }
        if (config.filtered && config.method != "none") {
            write_tensor_csv(art.tensor, out_path(config, "tensor_significant.csv"));
        }
        if (config.dense_export) {
            TensorOptions topts;
            topts.storage = TensorStorage::dense;
            topts.jobs = config.jobs;
            write_tensor_binary(compute_influence_tensor(art.partial, topts),
                                out_path(config, "tensor_dense.pct1"));
        }
        write_influence_matrix_csv(art.matrix, out_path(config, "influence_matrix.csv"));
        write_ranking_csv(ranking, out_path(config, "ranking.csv"));
    });
    for (const auto& excluded : totals.excluded) {
        manifest.diagnostics.push_back("stock excluded from ranking (no defined entries): " +
                                       excluded);
    }
    manifest.diagnostics.push_back("significant entries: " +
                                   std::to_string(art.tensor.entries.size()));
    manifest.write(out_path(config, "manifest_influence.json"));
    return manifest;
}

RunManifest run_stability(const RunConfig& config) {
    config.validate();
    RunManifest manifest;
    manifest.command = "stability";
    manifest.config = config;
    StageClock clock(manifest);
    ReturnPanel panel = load_panel_artifact(config, manifest);

    auto calendar = make_quarter_calendar(panel.dates, config.min_quarter_days);
    if (calendar.quarters.size() < 2) {
        throw ConfigError(kStage, "insufficient_quarters",
                          "insufficient quarters: need at least 2, found " +
                              std::to_string(calendar.quarters.size()));
    }
    for (const auto& label : calendar.dropped) {
        manifest.diagnostics.push_back("quarter dropped (under day minimum): " + label);
    }

    QuarterlyConfig qconfig;
    qconfig.method = config.method == "fisher"   ? SignificanceMethod::fisher
                     : config.method == "none" ? SignificanceMethod::none
                                               : SignificanceMethod::shuffle;
    qconfig.level = config.level;
    qconfig.replicates = config.replicates;
    qconfig.seed = config.seed;
    qconfig.max_triples_per_replicate = config.max_triples_per_replicate;
    qconfig.segment_length = config.segment_length;
    qconfig.direction = direction_of(config);
    qconfig.filtered = config.filtered;
    qconfig.jobs = config.jobs;

    auto quarterly = clock.time("quarterly_rankings", [&] {
        return quarterly_rankings(panel, calendar, qconfig);
    });
    for (const auto& s : quarterly.skipped) {
        manifest.diagnostics.push_back("quarter skipped: " + s);
    }
    if (quarterly.rankings.size() < 2) {
        throw ConfigError(kStage, "insufficient_quarters",
                          "insufficient quarters: fewer than 2 usable quarterly rankings");
    }

    auto taus = clock.time("tau_matrix", [&] { return tau_matrix(quarterly.rankings); });
    clock.time("exports", [&] {
        write_tau_matrix_csv(taus, out_path(config, "tau_matrix.csv"));
        std::ofstream rk(out_path(config, "quarterly_rankings.csv"));
        rk << "quarter,rank,ticker,d_value\n";
        for (const auto& r : quarterly.rankings) {
            for (std::size_t i = 0; i < r.tickers.size(); ++i) {
                rk << r.period_label << ',' << (i + 1) << ',' << r.tickers[i] << ','
                   << csv::format_double(r.d_values[i]) << '\n';
            }
        }
    });
    try {
        auto fit = clock.time("decay_fit", [&] { return decay_fit(taus); });
        write_decay_csv(fit, out_path(config, "decay_points.csv"));
        write_decay_fit_json(fit, out_path(config, "decay_fit.json"));
    } catch (const ComputeError& e) {
        manifest.diagnostics.push_back(std::string("decay fit unavailable: ") + e.what());
    }
    manifest.write(out_path(config, "manifest_stability.json"));
    return manifest;
}

RunManifest run_sectors(const RunConfig& config) {
    config.validate();
    if (config.sectors_path.empty()) {
        throw ConfigError(kStage, "missing_input", "no sector map configured");
    }
    RunManifest manifest;
    manifest.command = "sectors";
    manifest.config = config;
    StageClock clock(manifest);
    ReturnPanel panel = load_panel_artifact(config, manifest);
    manifest.input_digests.emplace_back(config.sectors_path, file_digest(config.sectors_path));

    auto sectors = load_sector_map(config.sectors_path);
    auto art = build_influence(panel, config, clock);
    auto attribution = clock.time("sector_attribution", [&] {
        return sector_influence(art.matrix, sectors);
    });
    auto rates = prediction_rate(attribution, sectors);
    auto closeness = sector_closeness(attribution);

    clock.time("exports", [&] {
        write_attribution_csv(attribution, out_path(config, "attribution.csv"));
        write_prediction_rates_csv(rates, out_path(config, "prediction_rates.csv"));
        write_closeness_csv(closeness, out_path(config, "closeness.csv"));
    });
    std::size_t undefined = 0;
    for (bool u : attribution.undefined) undefined += u ? 1 : 0;
    if (undefined > 0) {
        manifest.diagnostics.push_back("stocks with undefined attribution: " +
                                       std::to_string(undefined));
    }
    manifest.write(out_path(config, "manifest_sectors.json"));
    return manifest;
}

std::vector<RunManifest> run_report(const RunConfig& config) {
    std::vector<RunManifest> manifests;
    manifests.push_back(run_ingest(config));
    manifests.push_back(run_influence(config));
    manifests.push_back(run_stability(config));
    if (!config.sectors_path.empty()) {
        manifests.push_back(run_sectors(config));
    }
    return manifests;
}

}  // namespace pcinf
