#include "pcinf/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "pcinf/csv.hpp"
#include "pcinf/errors.hpp"

namespace pcinf {

namespace {

constexpr const char* kStage = "market_data";

struct RawSeries {
    std::map<std::string, double> prices;   // date -> adj_close
    std::map<std::string, double> volumes;  // date -> volume (if any)
};

IngestResult build_panel(std::istream& in, const std::string& origin) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ConfigError(kStage, "parse_error", origin + ": empty price file");
    }
    auto header = csv::split(csv::strip_cr(line));
    bool has_volume = false;
    if (header.size() >= 3 && header[0] == "date" && header[1] == "ticker" &&
        header[2] == "adj_close") {
        if (header.size() == 4 && header[3] == "volume") {
            has_volume = true;
        } else if (header.size() != 3) {
            throw ConfigError(kStage, "parse_error", origin + ": unexpected header");
        }
    } else {
        throw ConfigError(kStage, "parse_error",
                          origin + ": expected header 'date,ticker,adj_close[,volume]'");
    }

    std::map<std::string, RawSeries> series;  // ticker -> series
    std::set<std::string> calendar;
    std::vector<IngestRecord> log;
    std::set<std::string> rejected;  // tickers with non-positive prices

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        auto stripped = csv::strip_cr(line);
        if (stripped.empty()) continue;
        auto fields = csv::split(stripped);
        if (fields.size() < 3 || fields.size() > 4) {
            throw ConfigError(kStage, "parse_error",
                              origin + ": line " + std::to_string(line_no) +
                                  ": expected 3 or 4 fields, got " +
                                  std::to_string(fields.size()));
        }
        std::string date(fields[0]);
        std::string ticker(fields[1]);
        if (date.empty() || ticker.empty()) {
            throw ConfigError(kStage, "parse_error",
                              origin + ": line " + std::to_string(line_no) +
                                  ": empty date or ticker");
        }
        double price = csv::parse_double(fields[2], kStage, line_no);
        calendar.insert(date);
        if (price <= 0.0) {
            if (rejected.insert(ticker).second) {
                log.push_back({ticker, "dropped",
                               "non-positive price at " + date + " (line " +
                                   std::to_string(line_no) + ")"});
            }
            continue;
        }
        auto& s = series[ticker];
        s.prices[date] = price;
        if (has_volume && fields.size() == 4 && !fields[3].empty()) {
            s.volumes[date] = csv::parse_double(fields[3], kStage, line_no);
        }
    }
    for (const auto& t : rejected) series.erase(t);

    if (calendar.size() < 2) {
        throw ConfigError(kStage, "insufficient_dates",
                          origin + ": fewer than 2 distinct dates");
    }

    std::vector<std::string> dates(calendar.begin(), calendar.end());
    const std::size_t T = dates.size();

    // Drop tickers with no observation on the first union-calendar day:
    // forward-fill has nothing to start from.
    std::vector<std::string> tickers;
    for (const auto& [ticker, s] : series) {
        if (s.prices.empty()) continue;
        if (s.prices.begin()->first != dates.front()) {
            log.push_back({ticker, "dropped",
                           "missing first observation " + dates.front() +
                               " on the union calendar"});
            continue;
        }
        tickers.push_back(ticker);
    }
    if (tickers.empty()) {
        throw ConfigError(kStage, "no_tickers", origin + ": no usable tickers");
    }

    const std::size_t N = tickers.size();
    Eigen::MatrixXd prices(T, N);
    bool any_volume = false;
    Eigen::MatrixXd volumes = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(T),
                                                    static_cast<Eigen::Index>(N));
    for (std::size_t j = 0; j < N; ++j) {
        const auto& s = series[tickers[j]];
        double last = std::numeric_limits<double>::quiet_NaN();
        std::size_t fills = 0;
        for (std::size_t t = 0; t < T; ++t) {
            auto it = s.prices.find(dates[t]);
            if (it != s.prices.end()) {
                last = it->second;
            } else {
                ++fills;
            }
            prices(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = last;
            auto vit = s.volumes.find(dates[t]);
            if (vit != s.volumes.end()) {
                volumes(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = vit->second;
                any_volume = true;
            }
        }
        if (fills > 0) {
            log.push_back({tickers[j], "forward_fill",
                           std::to_string(fills) + " missing day(s) filled with prior close"});
        }
        log.push_back({tickers[j], "retained", ""});
    }

    PricePanel panel;
    panel.tickers = std::move(tickers);
    panel.dates = std::move(dates);
    panel.prices = std::move(prices);
    if (any_volume) panel.volumes = std::move(volumes);
    return {std::move(panel), std::move(log)};
}

std::string json_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::optional<std::size_t> PricePanel::ticker_index(const std::string& ticker) const {
    auto it = std::find(tickers.begin(), tickers.end(), ticker);
    if (it == tickers.end()) return std::nullopt;
    return static_cast<std::size_t>(it - tickers.begin());
}

IngestResult load_prices(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(kStage, "missing_file", "cannot open price file " + path);
    }
    return build_panel(in, path);
}

IngestResult load_prices_from_string(const std::string& content, const std::string& origin) {
    std::istringstream in(content);
    return build_panel(in, origin);
}

std::pair<PricePanel, std::vector<LiquidityReport>> filter_illiquid(const PricePanel& panel,
                                                                    double max_flat_fraction) {
    if (max_flat_fraction < 0.0 || max_flat_fraction > 1.0) {
        throw ConfigError(kStage, "bad_cutoff", "max_flat_fraction must be in [0,1]");
    }
    const Eigen::Index T = panel.prices.rows();
    const Eigen::Index N = panel.prices.cols();
    std::vector<LiquidityReport> reports;
    reports.reserve(static_cast<std::size_t>(N));
    std::vector<std::size_t> keep;
    for (Eigen::Index j = 0; j < N; ++j) {
        Eigen::Index flat = 0;
        for (Eigen::Index t = 1; t < T; ++t) {
            if (panel.prices(t, j) == panel.prices(t - 1, j)) ++flat;
        }
        double frac = (T > 1) ? static_cast<double>(flat) / static_cast<double>(T - 1) : 0.0;
        bool retained = frac <= max_flat_fraction;
        reports.push_back({panel.tickers[static_cast<std::size_t>(j)], frac, retained});
        if (retained) keep.push_back(static_cast<std::size_t>(j));
    }
    if (keep.empty()) {
        throw ComputeError(kStage, "no_liquid_stocks", "no liquid stocks after filter");
    }

    PricePanel out;
    out.dates = panel.dates;
    out.tickers.reserve(keep.size());
    out.prices.resize(T, static_cast<Eigen::Index>(keep.size()));
    if (panel.volumes) {
        out.volumes = Eigen::MatrixXd(T, static_cast<Eigen::Index>(keep.size()));
    }
    for (std::size_t k = 0; k < keep.size(); ++k) {
        out.tickers.push_back(panel.tickers[keep[k]]);
        out.prices.col(static_cast<Eigen::Index>(k)) =
            panel.prices.col(static_cast<Eigen::Index>(keep[k]));
        if (panel.volumes) {
            out.volumes->col(static_cast<Eigen::Index>(k)) =
                panel.volumes->col(static_cast<Eigen::Index>(keep[k]));
        }
    }
    return {std::move(out), std::move(reports)};
}

ReturnPanel log_returns(const PricePanel& panel, const std::string& index_ticker) {
    auto idx = panel.ticker_index(index_ticker);
    if (!idx) {
        throw ConfigError(kStage, "missing_index",
                          "designated index ticker '" + index_ticker + "' absent from panel");
    }
    const Eigen::Index T = panel.prices.rows();
    const Eigen::Index N = panel.prices.cols();
    if (T < 2) {
        throw ConfigError(kStage, "insufficient_dates", "need at least 2 dates for returns");
    }

    ReturnPanel out;
    out.index_ticker = index_ticker;
    out.dates.assign(panel.dates.begin() + 1, panel.dates.end());
    out.returns.resize(T - 1, N - 1);
    out.index_returns.resize(T - 1);

    Eigen::Index col = 0;
    for (Eigen::Index j = 0; j < N; ++j) {
        bool is_index = (static_cast<std::size_t>(j) == *idx);
        for (Eigen::Index t = 0; t + 1 < T; ++t) {
            double r = std::log(panel.prices(t + 1, j) / panel.prices(t, j));
            if (is_index) {
                out.index_returns(t) = r;
            } else {
                out.returns(t, col) = r;
            }
        }
        if (!is_index) {
            out.tickers.push_back(panel.tickers[static_cast<std::size_t>(j)]);
            ++col;
        }
    }
    return out;
}

void write_return_panel_csv(const ReturnPanel& panel, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError(kStage, "io_error", "cannot write " + path);
    out << "date," << panel.index_ticker;
    for (const auto& t : panel.tickers) out << ',' << t;
    out << '\n';
    for (Eigen::Index t = 0; t < panel.returns.rows(); ++t) {
        out << panel.dates[static_cast<std::size_t>(t)] << ','
            << csv::format_double(panel.index_returns(t));
        for (Eigen::Index j = 0; j < panel.returns.cols(); ++j) {
            out << ',' << csv::format_double(panel.returns(t, j));
        }
        out << '\n';
    }
}

ReturnPanel read_return_panel_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(kStage, "missing_file", "cannot open return panel " + path);
    std::string line;
    if (!std::getline(in, line)) {
        throw ConfigError(kStage, "parse_error", path + ": empty return panel");
    }
    auto header = csv::split(csv::strip_cr(line));
    if (header.size() < 3 || header[0] != "date") {
        throw ConfigError(kStage, "parse_error", path + ": bad return panel header");
    }
    ReturnPanel panel;
    panel.index_ticker = std::string(header[1]);
    for (std::size_t j = 2; j < header.size(); ++j) panel.tickers.emplace_back(header[j]);

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        auto stripped = csv::strip_cr(line);
        if (stripped.empty()) continue;
        auto fields = csv::split(stripped);
        if (fields.size() != header.size()) {
            throw ConfigError(kStage, "parse_error",
                              path + ": line " + std::to_string(line_no) + ": field count");
        }
        panel.dates.emplace_back(fields[0]);
        std::vector<double> row;
        row.reserve(fields.size() - 1);
        for (std::size_t j = 1; j < fields.size(); ++j) {
            row.push_back(csv::parse_double(fields[j], kStage, line_no));
        }
        rows.push_back(std::move(row));
    }
    panel.returns.resize(static_cast<Eigen::Index>(rows.size()),
                         static_cast<Eigen::Index>(panel.tickers.size()));
    panel.index_returns.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t t = 0; t < rows.size(); ++t) {
        panel.index_returns(static_cast<Eigen::Index>(t)) = rows[t][0];
        for (std::size_t j = 0; j < panel.tickers.size(); ++j) {
            panel.returns(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
                rows[t][j + 1];
        }
    }
    return panel;
}

void write_ingest_log(const std::vector<IngestRecord>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError(kStage, "io_error", "cannot write " + path);
    for (const auto& rec : log) {
        out << "{\"ticker\":\"" << json_escape(rec.ticker) << "\",\"action\":\""
            << json_escape(rec.action) << "\",\"detail\":\"" << json_escape(rec.detail)
            << "\"}\n";
    }
}

void write_liquidity_reports(const std::vector<LiquidityReport>& reports,
                             const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError(kStage, "io_error", "cannot write " + path);
    out << "ticker,flat_fraction,retained\n";
    for (const auto& r : reports) {
        out << r.ticker << ',' << csv::format_double(r.flat_fraction) << ','
            << (r.retained ? "true" : "false") << '\n';
    }
}

}  // namespace pcinf
