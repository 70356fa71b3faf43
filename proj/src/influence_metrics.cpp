#include "pcinf/influence_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "pcinf/csv.hpp"
#include "pcinf/errors.hpp"
#include "pcinf/parallel.hpp"

namespace pcinf {

namespace {

constexpr const char* kStage = "influence_metrics";
const double kNaN = std::numeric_limits<double>::quiet_NaN();

InfluenceMatrix finalize(std::vector<std::string> tickers, Eigen::MatrixXd& sums,
                         Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>& counts) {
    InfluenceMatrix out;
    out.tickers = std::move(tickers);
    const Eigen::Index N = sums.rows();
    out.values.resize(N, N);
    for (Eigen::Index x = 0; x < N; ++x) {
        for (Eigen::Index z = 0; z < N; ++z) {
            out.values(x, z) = counts(x, z) > 0 ? sums(x, z) / counts(x, z) : kNaN;
        }
    }
    out.counts = std::move(counts);
    return out;
}

}  // namespace

InfluenceMatrix stock_influence(const InfluenceTensor& tensor, AggregationMode mode) {
    if (mode == AggregationMode::unfiltered && tensor.storage != TensorStorage::dense) {
        throw ConfigError(kStage, "mode_mismatch",
                          "unfiltered aggregation needs a dense tensor");
    }
    const Eigen::Index N = static_cast<Eigen::Index>(tensor.tickers.size());
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(N, N);
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> counts =
        Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>::Zero(N, N);
    // Each stored (x, y, z) term enters both d(x:z) and d(y:z).
    for (const auto& e : tensor.entries) {
        sums(e.x, e.z) += e.d;
        counts(e.x, e.z) += 1;
        sums(e.y, e.z) += e.d;
        counts(e.y, e.z) += 1;
    }
    return finalize(tensor.tickers, sums, counts);
}

InfluenceMatrix stock_influence_unfiltered(const PartialCorrelationMatrix& partial, int jobs) {
    const std::size_t N = partial.tickers.size();
    if (N < 3) {
        throw ComputeError(kStage, "insufficient_tickers", "need at least 3 stocks");
    }
    const Eigen::MatrixXd& P = partial.values;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N),
                                                 static_cast<Eigen::Index>(N));
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> counts =
        Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>::Zero(static_cast<Eigen::Index>(N),
                                                                 static_cast<Eigen::Index>(N));
    // Parallel over Z: each worker owns whole columns of sums/counts.
    parallel_chunks(N, jobs, [&](std::size_t zb, std::size_t ze) {
        for (std::size_t z = zb; z < ze; ++z) {
            const Eigen::Index zi = static_cast<Eigen::Index>(z);
            for (std::size_t x = 0; x + 1 < N; ++x) {
                if (x == z) continue;
                const Eigen::Index xi = static_cast<Eigen::Index>(x);
                const double pxz = P(xi, zi);
                if (std::abs(pxz) >= 1.0 - 1e-12) continue;
                const double one_minus_xz = 1.0 - pxz * pxz;
                for (std::size_t y = x + 1; y < N; ++y) {
                    if (y == z) continue;
                    const Eigen::Index yi = static_cast<Eigen::Index>(y);
                    const double pyz = P(yi, zi);
                    if (std::abs(pyz) >= 1.0 - 1e-12) continue;
                    const double pxy = P(xi, yi);
                    const double d =
                        pxy - (pxy - pxz * pyz) / std::sqrt(one_minus_xz * (1.0 - pyz * pyz));
                    sums(xi, zi) += d;
                    counts(xi, zi) += 1;
                    sums(yi, zi) += d;
                    counts(yi, zi) += 1;
                }
            }
        }
    });
    auto tickers = partial.tickers;
    return finalize(std::move(tickers), sums, counts);
}

TotalInfluence total_influence(const InfluenceMatrix& matrix, AggregationDirection direction) {
    const Eigen::Index N = matrix.values.rows();
    TotalInfluence out;
    out.tickers = matrix.tickers;
    out.values.assign(static_cast<std::size_t>(N), kNaN);
    for (Eigen::Index w = 0; w < N; ++w) {
        double sum = 0.0;
        int count = 0;
        for (Eigen::Index other = 0; other < N; ++other) {
            if (other == w) continue;
            double v = direction == AggregationDirection::outgoing ? matrix.values(other, w)
                                                                   : matrix.values(w, other);
            if (std::isnan(v)) continue;
            sum += v;
            ++count;
        }
        if (count > 0) {
            out.values[static_cast<std::size_t>(w)] = sum / count;
        } else {
            out.excluded.push_back(matrix.tickers[static_cast<std::size_t>(w)]);
        }
    }
    return out;
}

InfluenceRanking rank_by_influence(const TotalInfluence& totals, const std::string& period_label) {
    std::vector<std::size_t> order;
    order.reserve(totals.tickers.size());
    for (std::size_t i = 0; i < totals.tickers.size(); ++i) {
        if (!std::isnan(totals.values[i])) order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (totals.values[a] != totals.values[b]) return totals.values[a] > totals.values[b];
        return totals.tickers[a] < totals.tickers[b];
    });
    InfluenceRanking ranking;
    ranking.period_label = period_label;
    ranking.tickers.reserve(order.size());
    ranking.d_values.reserve(order.size());
    for (std::size_t i : order) {
        ranking.tickers.push_back(totals.tickers[i]);
        ranking.d_values.push_back(totals.values[i]);
    }
    return ranking;
}

void write_influence_matrix_csv(const InfluenceMatrix& matrix, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError(kStage, "io_error", "cannot write " + path);
    out << "ticker";
    for (const auto& t : matrix.tickers) out << ',' << t;
    out << '\n';
    for (Eigen::Index x = 0; x < matrix.values.rows(); ++x) {
        out << matrix.tickers[static_cast<std::size_t>(x)];
        for (Eigen::Index z = 0; z < matrix.values.cols(); ++z) {
            double v = matrix.values(x, z);
            out << ',' << (std::isnan(v) ? std::string() : csv::format_double(v));
        }
        out << '\n';
    }
}

void write_ranking_csv(const InfluenceRanking& ranking, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError(kStage, "io_error", "cannot write " + path);
    out << "rank,ticker,d_value\n";
    for (std::size_t i = 0; i < ranking.tickers.size(); ++i) {
        out << (i + 1) << ',' << ranking.tickers[i] << ','
            << csv::format_double(ranking.d_values[i]) << '\n';
    }
}

}  // namespace pcinf
