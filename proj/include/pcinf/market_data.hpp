#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace pcinf {

// One line of the ingest log (written out as line-delimited JSON).
struct IngestRecord {
    std::string ticker;
    std::string action;  // "forward_fill", "dropped", "retained", ...
    std::string detail;
};

// Aligned adjusted-close panel on the union calendar of all tickers.
// Interior gaps are forward-filled at ingestion; a filled day is remembered
// so the liquidity filter can count it as a flat day.
struct PricePanel {
    std::vector<std::string> tickers;
    std::vector<std::string> dates;           // strictly increasing labels
    Eigen::MatrixXd prices;                   // T x N, strictly positive
    std::optional<Eigen::MatrixXd> volumes;   // T x N when present in input

    std::size_t num_days() const { return dates.size(); }
    std::size_t num_tickers() const { return tickers.size(); }
    std::optional<std::size_t> ticker_index(const std::string& ticker) const;
};

// Daily log returns plus the designated index return series M.
struct ReturnPanel {
    std::string index_ticker;
    std::vector<std::string> tickers;   // index column excluded
    std::vector<std::string> dates;     // length T-1, label of the later day
    Eigen::MatrixXd returns;            // (T-1) x N
    Eigen::VectorXd index_returns;      // length T-1

    std::size_t num_obs() const { return dates.size(); }
    std::size_t num_tickers() const { return tickers.size(); }
};

struct LiquidityReport {
    std::string ticker;
    double flat_fraction = 0.0;  // fraction of days with no price movement
    bool retained = false;
};

struct IngestResult {
    PricePanel panel;
    std::vector<IngestRecord> log;
};

// Reads the long-format CSV contract: header `date,ticker,adj_close,volume`
// (volume optional). Gaps are forward-filled; a ticker missing its first
// observation on the union calendar is dropped with a warning; non-positive
// prices drop the ticker.
IngestResult load_prices(const std::string& path);
IngestResult load_prices_from_string(const std::string& content, const std::string& origin);

// Keeps tickers whose flat-day fraction is <= max_flat_fraction. A day is
// flat when P(t) == P(t-1), which includes forward-filled days.
std::pair<PricePanel, std::vector<LiquidityReport>> filter_illiquid(const PricePanel& panel,
                                                                    double max_flat_fraction);

// r_i(t) = ln(P_i(t+1)/P_i(t)); the index ticker's column becomes
// index_returns and is removed from the stock columns.
ReturnPanel log_returns(const PricePanel& panel, const std::string& index_ticker);

// Wide-format return panel persistence (`date,<index>,<tickers...>`).
void write_return_panel_csv(const ReturnPanel& panel, const std::string& path);
ReturnPanel read_return_panel_csv(const std::string& path);

void write_ingest_log(const std::vector<IngestRecord>& log, const std::string& path);
void write_liquidity_reports(const std::vector<LiquidityReport>& reports, const std::string& path);

}  // namespace pcinf
