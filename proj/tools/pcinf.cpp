#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "pcinf/errors.hpp"
#include "pcinf/log.hpp"
#include "pcinf/pipeline.hpp"

namespace {

struct Flags {
    std::string config_path;
    std::optional<std::string> prices, sectors, index_ticker, method, aggregation, out;
    std::optional<double> level, liquidity_cutoff;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> replicates, segment_length, max_triples, min_quarter_days;
    std::optional<int> jobs;
    bool filtered_set = false, unfiltered_set = false, dense_export = false;
};

void add_common_flags(CLI::App* cmd, Flags& flags) {
    cmd->add_option("--config", flags.config_path, "key=value config file");
    cmd->add_option("--prices", flags.prices, "long-format price CSV");
    cmd->add_option("--sectors", flags.sectors, "ticker,sector CSV");
    cmd->add_option("--index", flags.index_ticker, "ticker of the market index");
    cmd->add_option("--level", flags.level, "two-tailed significance level");
    cmd->add_option("--method", flags.method, "significance method: shuffle|fisher|none");
    cmd->add_option("--replicates", flags.replicates, "shuffle replicates");
    cmd->add_option("--seed", flags.seed, "base RNG seed");
    cmd->add_option("--segment-length", flags.segment_length,
                    "segment length for the block-shuffle variant");
    cmd->add_option("--max-triples", flags.max_triples, "null samples kept per replicate");
    cmd->add_option("--liquidity-cutoff", flags.liquidity_cutoff,
                    "max flat-day fraction for liquidity filter");
    cmd->add_option("--aggregation", flags.aggregation,
                    "total-influence direction: outgoing|incoming");
    cmd->add_option("--min-quarter-days", flags.min_quarter_days,
                    "minimum trading days per quarter");
    cmd->add_option("--jobs", flags.jobs, "worker threads (default: logical cores)");
    cmd->add_option("--out", flags.out, "output directory");
    cmd->add_flag("--unfiltered", flags.unfiltered_set,
                  "aggregate over all triples instead of significant ones");
    cmd->add_flag("--dense-export", flags.dense_export,
                  "also write the dense binary tensor (N <= 60)");
}

pcinf::RunConfig build_config(const Flags& flags) {
    pcinf::RunConfig config;
    if (!flags.config_path.empty()) config = pcinf::parse_config_file(flags.config_path);
    // Flags win over the config file.
    if (flags.prices) config.prices_path = *flags.prices;
    if (flags.sectors) config.sectors_path = *flags.sectors;
    if (flags.index_ticker) config.index_ticker = *flags.index_ticker;
    if (flags.level) config.level = *flags.level;
    if (flags.method) config.method = *flags.method;
    if (flags.replicates) config.replicates = *flags.replicates;
    if (flags.seed) config.seed = *flags.seed;
    if (flags.segment_length) config.segment_length = *flags.segment_length;
    if (flags.max_triples) config.max_triples_per_replicate = *flags.max_triples;
    if (flags.liquidity_cutoff) config.liquidity_cutoff = *flags.liquidity_cutoff;
    if (flags.aggregation) config.aggregation = *flags.aggregation;
    if (flags.min_quarter_days) config.min_quarter_days = *flags.min_quarter_days;
    if (flags.jobs) config.jobs = *flags.jobs;
    if (flags.out) config.out_dir = *flags.out;
    if (flags.unfiltered_set) config.filtered = false;
    if (flags.dense_export) config.dense_export = true;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Partial-correlation influence analysis for equity return panels"};
    app.require_subcommand(1);

    Flags flags;
    auto* ingest = app.add_subcommand("ingest", "load prices, filter, write the return panel");
    auto* influence =
        app.add_subcommand("influence", "tensor, thresholds, influence matrix, ranking");
    auto* stability = app.add_subcommand("stability", "quarterly tau matrix and decay fit");
    auto* sectors = app.add_subcommand("sectors", "sector attribution and prediction rates");
    auto* report = app.add_subcommand("report", "run the full pipeline end to end");
    for (auto* cmd : {ingest, influence, stability, sectors, report}) {
        add_common_flags(cmd, flags);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        pcinf::RunConfig config = build_config(flags);
        if (ingest->parsed()) {
            pcinf::run_ingest(config);
        } else if (influence->parsed()) {
            pcinf::run_influence(config);
        } else if (stability->parsed()) {
            pcinf::run_stability(config);
        } else if (sectors->parsed()) {
            pcinf::run_sectors(config);
        } else if (report->parsed()) {
            pcinf::run_report(config);
        }
        return 0;
    } catch (const pcinf::Error& e) {
        std::cerr << "pcinf error (stage=" << e.stage() << ", code=" << e.code()
                  << "): " << e.what() << '\n';
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "pcinf error: " << e.what() << '\n';
        return 3;
    }
}
