#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "pcinf/market_data.hpp"
#include "pcinf/sector.hpp"

// Independent oracles and synthetic data for the test suites. Everything in
// here is deliberately naive: regression residuals instead of closed forms,
// explicit pair counting instead of inversion counting.
namespace oracle {

// Sample Pearson correlation by direct sums.
inline double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const double n = static_cast<double>(x.size());
    double mx = x.mean(), my = y.mean();
    double cov = 0, vx = 0, vy = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        cov += (x(i) - mx) * (y(i) - my);
        vx += (x(i) - mx) * (x(i) - mx);
        vy += (y(i) - my) * (y(i) - my);
    }
    (void)n;
    return cov / std::sqrt(vx * vy);
}

// Residual of v after least-squares regression on the given regressors
// (intercept included).
inline Eigen::VectorXd residual(const Eigen::VectorXd& v,
                                const std::vector<Eigen::VectorXd>& regressors) {
    const Eigen::Index n = v.size();
    Eigen::MatrixXd design(n, static_cast<Eigen::Index>(regressors.size()) + 1);
    design.col(0).setOnes();
    for (std::size_t k = 0; k < regressors.size(); ++k) {
        design.col(static_cast<Eigen::Index>(k) + 1) = regressors[k];
    }
    Eigen::VectorXd coef = design.colPivHouseholderQr().solve(v);
    return v - design * coef;
}

// Partial correlation as the Pearson correlation of regression residuals.
inline double partial_corr_residual(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                    const std::vector<Eigen::VectorXd>& conditioners) {
    return pearson(residual(x, conditioners), residual(y, conditioners));
}

// Kendall tau-a by explicit pair counting over scores attached to a common
// item ordering: a and b are the two score vectors of the same items.
inline double kendall_pair_counting(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    long concordant = 0, discordant = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double prod = (a[i] - a[j]) * (b[i] - b[j]);
            if (prod > 0) ++concordant;
            else if (prod < 0) ++discordant;
        }
    }
    return static_cast<double>(concordant - discordant) /
           (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

inline std::vector<std::string> make_tickers(std::size_t n, const std::string& prefix = "S") {
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::string num = std::to_string(i);
        out.push_back(prefix + std::string(3 - std::min<std::size_t>(3, num.size()), '0') + num);
    }
    return out;
}

inline std::vector<std::string> make_dates(std::size_t t) {
    // Synthetic strictly increasing ISO labels, ~63 trading days per quarter.
    std::vector<std::string> out;
    out.reserve(t);
    int year = 2000, month = 1, day = 1;
    for (std::size_t i = 0; i < t; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
        out.emplace_back(buf);
        if (++day > 21) {  // 21 "trading days" per synthetic month
            day = 1;
            if (++month > 12) {
                month = 1;
                ++year;
            }
        }
    }
    return out;
}

// i.i.d. Gaussian return panel with an independent Gaussian index.
inline pcinf::ReturnPanel gaussian_panel(std::size_t n, std::size_t t, std::uint64_t seed,
                                         double sigma = 0.01) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    pcinf::ReturnPanel panel;
    panel.index_ticker = "IDX";
    panel.tickers = make_tickers(n);
    panel.dates = make_dates(t);
    panel.returns.resize(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(n));
    panel.index_returns.resize(static_cast<Eigen::Index>(t));
    for (std::size_t r = 0; r < t; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            panel.returns(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = noise(rng);
        }
        panel.index_returns(static_cast<Eigen::Index>(r)) = noise(rng);
    }
    return panel;
}

// One-factor market: r_i = loading_i * m + eps_i with positive loadings; the
// index series is the factor itself.
inline pcinf::ReturnPanel one_factor_panel(std::size_t n, std::size_t t, std::uint64_t seed,
                                           double loading_lo = 0.5, double loading_hi = 1.5,
                                           double noise_sigma = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> loading(loading_lo, loading_hi);
    std::vector<double> loadings(n);
    for (auto& l : loadings) l = loading(rng);
    pcinf::ReturnPanel panel;
    panel.index_ticker = "IDX";
    panel.tickers = make_tickers(n);
    panel.dates = make_dates(t);
    panel.returns.resize(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(n));
    panel.index_returns.resize(static_cast<Eigen::Index>(t));
    for (std::size_t r = 0; r < t; ++r) {
        double m = gauss(rng);
        panel.index_returns(static_cast<Eigen::Index>(r)) = m;
        for (std::size_t c = 0; c < n; ++c) {
            panel.returns(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                loadings[c] * m + noise_sigma * gauss(rng);
        }
    }
    return panel;
}

// Block-factor market: `sectors` groups of `per_sector` stocks, each group
// driven by its own factor on top of a market factor. snr is the ratio of
// sector-factor to idiosyncratic standard deviation.
inline pcinf::ReturnPanel block_factor_panel(std::size_t sectors, std::size_t per_sector,
                                             std::size_t t, std::uint64_t seed, double snr = 1.0,
                                             double market_loading = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t n = sectors * per_sector;
    pcinf::ReturnPanel panel;
    panel.index_ticker = "IDX";
    panel.tickers = make_tickers(n);
    panel.dates = make_dates(t);
    panel.returns.resize(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(n));
    panel.index_returns.resize(static_cast<Eigen::Index>(t));
    for (std::size_t r = 0; r < t; ++r) {
        double m = gauss(rng);
        panel.index_returns(static_cast<Eigen::Index>(r)) = m;
        std::vector<double> factors(sectors);
        for (auto& f : factors) f = gauss(rng);
        for (std::size_t c = 0; c < n; ++c) {
            double f = factors[c / per_sector];
            panel.returns(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                market_loading * m + snr * f + gauss(rng);
        }
    }
    return panel;
}

inline pcinf::SectorMap block_sector_map(std::size_t sectors, std::size_t per_sector) {
    pcinf::SectorMap map;
    auto tickers = make_tickers(sectors * per_sector);
    for (std::size_t i = 0; i < tickers.size(); ++i) {
        map[tickers[i]] = "SEC" + std::to_string(i / per_sector);
    }
    return map;
}

}  // namespace oracle
