#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "pcinf/market_data.hpp"

namespace pcinf {

// Pairwise Pearson correlations of the stock columns plus each stock's
// correlation with the index series M.
struct CorrelationMatrix {
    std::vector<std::string> tickers;
    Eigen::MatrixXd values;             // N x N, symmetric, unit diagonal
    Eigen::VectorXd index_correlations; // rho(X, M)
};

// First-order partials rho(X,Y:M), the input to every triple evaluation.
struct PartialCorrelationMatrix {
    std::vector<std::string> tickers;
    Eigen::MatrixXd values;  // N x N, symmetric, unit diagonal by convention
};

enum class TensorStorage { dense, significant_only };

struct TripleDiagnostic {
    std::uint32_t x, y, z;
    std::string reason;
};

struct InfluenceEntry {
    std::uint32_t x, y, z;  // x < y, z not in {x, y}
    double d;
};

// d(X,Y:Z) over all unordered pairs (X,Y) and conditioning stocks Z.
// Entries are ordered by (z, x, y) regardless of thread count.
struct InfluenceTensor {
    std::vector<std::string> tickers;
    TensorStorage storage = TensorStorage::dense;
    double threshold = 0.0;  // significant-only: min |d| of stored entries
    std::vector<InfluenceEntry> entries;
    std::vector<TripleDiagnostic> skipped;

    std::size_t num_tickers() const { return tickers.size(); }
};

struct TensorOptions {
    TensorStorage storage = TensorStorage::dense;
    double threshold = 0.0;  // used in significant-only mode
    int jobs = 0;            // <= 0: all logical cores
};

// Pearson coefficient with means subtracted and both standard deviations in
// the denominator. Throws on zero-variance input.
double pearson(const Eigen::Ref<const Eigen::VectorXd>& x,
               const Eigen::Ref<const Eigen::VectorXd>& y);

// rho(X,Y:M) from the three raw correlations.
double partial_corr_on_index(double rho_xy, double rho_xm, double rho_ym);

// rho(X,Y:M,Z) from three first-order partials.
double partial_corr_on_index_and_stock(double rho_xy_m, double rho_xz_m, double rho_yz_m);

// d(X,Y:Z) = rho(X,Y:M) - rho(X,Y:M,Z).
double influence_triple(double rho_xy_m, double rho_xz_m, double rho_yz_m);

// Legacy index-free variant d*(X,Y:Z) = rho(X,Y) - rho(X,Y:Z), kept for
// comparison studies; dominated by the market mode on real panels.
double influence_star_triple(double rho_xy, double rho_xy_z);

CorrelationMatrix correlation_matrix(const ReturnPanel& panel);
PartialCorrelationMatrix partial_on_index_matrix(const CorrelationMatrix& corr);

InfluenceTensor compute_influence_tensor(const ReturnPanel& panel, const TensorOptions& opts);
InfluenceTensor compute_influence_tensor(const PartialCorrelationMatrix& partial,
                                         const TensorOptions& opts);

// Total ordered-triple count N(N-1)(N-2)/2.
std::uint64_t triple_count(std::size_t n);

void write_tensor_csv(const InfluenceTensor& tensor, const std::string& path);
// Binary columnar dump (magic "PCT1", little-endian).
void write_tensor_binary(const InfluenceTensor& tensor, const std::string& path);
InfluenceTensor read_tensor_binary(const std::string& path);

}  // namespace pcinf
