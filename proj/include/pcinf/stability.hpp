#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "pcinf/influence_metrics.hpp"
#include "pcinf/market_data.hpp"
#include "pcinf/significance.hpp"

namespace pcinf {

// Contiguous calendar quarters over the sample, by return-row range.
struct QuarterCalendar {
    struct Quarter {
        std::string label;       // e.g. "2003Q2"
        std::size_t row_begin;   // inclusive, into the return panel rows
        std::size_t row_end;     // exclusive
        std::string start_date;
        std::string end_date;
    };
    std::vector<Quarter> quarters;
    std::vector<std::string> dropped;  // labels of quarters under the day minimum
};

// Derives quarters from ISO-8601 date labels; quarters with fewer than
// min_days trading days are dropped.
QuarterCalendar make_quarter_calendar(const std::vector<std::string>& dates,
                                      std::size_t min_days = 20);

enum class SignificanceMethod { shuffle, fisher, none };

struct QuarterlyConfig {
    SignificanceMethod method = SignificanceMethod::shuffle;
    double level = 0.02;
    std::size_t replicates = 10;
    std::uint64_t seed = 0;
    std::size_t max_triples_per_replicate = 1'000'000;
    std::optional<std::size_t> segment_length;
    AggregationDirection direction = AggregationDirection::outgoing;
    bool filtered = true;  // unfiltered average available behind this flag
    int jobs = 0;
};

struct QuarterlyResult {
    std::vector<InfluenceRanking> rankings;
    std::vector<std::string> skipped;  // quarter label + reason
};

// Full per-quarter pipeline: correlations -> tensor -> significance filter ->
// d(X) -> ranking, with thresholds recomputed from each quarter's shuffles.
QuarterlyResult quarterly_rankings(const ReturnPanel& panel, const QuarterCalendar& calendar,
                                   const QuarterlyConfig& config);

// Kendall tau-a between two orderings of the same ticker set. O(n log n)
// inversion counting; agrees exactly with direct pair counting.
double kendall_tau(const std::vector<std::string>& order_a,
                   const std::vector<std::string>& order_b);

// Q x Q tau matrix on per-pair ticker intersections; NaN where undefined.
struct TauMatrix {
    std::vector<std::string> labels;
    Eigen::MatrixXd values;
};

TauMatrix tau_matrix(const std::vector<InfluenceRanking>& rankings);

struct DecayFit {
    double tau0 = 0.0;
    double lambda = 0.0;  // characteristic time in quarters
    double residual_rms = 0.0;
    std::vector<std::pair<double, double>> points;  // (interval, mean tau)
};

// Fits tau = tau0 * exp(-t/lambda) to interval-averaged tau values by
// nonlinear least squares, initialized from a log-linear regression over the
// positive points.
DecayFit decay_fit(const TauMatrix& matrix);

void write_tau_matrix_csv(const TauMatrix& matrix, const std::string& path);
void write_decay_csv(const DecayFit& fit, const std::string& path);
void write_decay_fit_json(const DecayFit& fit, const std::string& path);

}  // namespace pcinf
