#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "pcinf/influence_metrics.hpp"

namespace pcinf {

// Ticker -> GICS-style sector label.
using SectorMap = std::map<std::string, std::string>;

SectorMap load_sector_map(const std::string& path);

// Per-stock sector influences d^S_X and attribution coefficients beta^S_X.
struct SectorAttribution {
    std::vector<std::string> tickers;
    std::vector<std::string> sectors;  // sorted labels
    Eigen::MatrixXd d;                 // N x S, NaN where absent
    Eigen::MatrixXd beta;              // raw d / sum(d); NaN when undefined
    Eigen::MatrixXd beta_rectified;    // max(d,0) normalized; NaN when undefined
    std::vector<bool> mixed_sign;      // per stock: d^S_X signs differ
    std::vector<bool> undefined;       // per stock: |sum d| below tolerance
};

// d^S_X = mean of d(X:Z) over Z in sector S; X itself is excluded from its
// own sector's average.
SectorAttribution sector_influence(const InfluenceMatrix& matrix, const SectorMap& sectors);

// Fills beta / beta_rectified / flags on an attribution whose d is set.
void sector_betas(SectorAttribution& attribution);

struct PredictionRate {
    std::string sector;
    std::size_t n_members = 0;
    double rate = 0.0;      // fraction of top-N_S stocks by beta^S truly in S
    double baseline = 0.0;  // N_S / N
};

std::vector<PredictionRate> prediction_rate(const SectorAttribution& attribution,
                                            const SectorMap& sectors);

// rho(d^{S_i}, d^{S_j}) across stocks, pairwise-deleting absent entries;
// NaN when fewer than 3 common stocks.
struct SectorClosenessMatrix {
    std::vector<std::string> sectors;
    Eigen::MatrixXd values;
};

SectorClosenessMatrix sector_closeness(const SectorAttribution& attribution);

void write_attribution_csv(const SectorAttribution& attribution, const std::string& path);
void write_closeness_csv(const SectorClosenessMatrix& matrix, const std::string& path);
void write_prediction_rates_csv(const std::vector<PredictionRate>& rates,
                                const std::string& path);

}  // namespace pcinf
