#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "pcinf/correlation.hpp"

namespace pcinf {

// d(X:Z): average influence of conditioning stock Z (column) on target stock
// X (row). Generally asymmetric. Diagonal and zero-count cells hold NaN.
struct InfluenceMatrix {
    std::vector<std::string> tickers;
    Eigen::MatrixXd values;                     // N x N, NaN where undefined
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> counts;

    bool defined(Eigen::Index x, Eigen::Index z) const { return counts(x, z) > 0; }
};

enum class AggregationMode { filtered, unfiltered };

// Which slot of d(X:Z) the total influence d(.) averages over. "outgoing"
// averages d(X:W) over targets X, measuring the influence W exerts;
// "incoming" averages over conditioning stocks, measuring influence received.
enum class AggregationDirection { outgoing, incoming };

struct InfluenceRanking {
    std::string period_label;
    std::vector<std::string> tickers;  // descending d value, ties by ticker
    std::vector<double> d_values;
};

// Averages d(X,Y:Z) over Y. In filtered mode the tensor is expected to be
// significance-filtered and cells with no surviving terms stay absent.
InfluenceMatrix stock_influence(const InfluenceTensor& tensor, AggregationMode mode);

// Streaming unfiltered aggregation straight from the partial matrix; no
// tensor materialization, so it has no dense-mode size limit.
InfluenceMatrix stock_influence_unfiltered(const PartialCorrelationMatrix& partial, int jobs = 0);

struct TotalInfluence {
    std::vector<std::string> tickers;
    std::vector<double> values;              // NaN for excluded stocks
    std::vector<std::string> excluded;       // stocks with no defined entries
};

TotalInfluence total_influence(const InfluenceMatrix& matrix,
                               AggregationDirection direction = AggregationDirection::outgoing);

InfluenceRanking rank_by_influence(const TotalInfluence& totals, const std::string& period_label);

void write_influence_matrix_csv(const InfluenceMatrix& matrix, const std::string& path);
void write_ranking_csv(const InfluenceRanking& ranking, const std::string& path);

}  // namespace pcinf
