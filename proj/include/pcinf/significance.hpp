#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pcinf/correlation.hpp"
#include "pcinf/market_data.hpp"

namespace pcinf {

struct NullMoments {
    double mean = 0.0;
    double stddev = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0;  // standardized 4th moment (Gaussian = 3)
    std::size_t samples = 0;
};

// Two-tailed |d| cutoffs per significance level.
struct ThresholdTable {
    std::vector<double> levels;      // fractions in (0, 0.5], ascending
    std::vector<double> thresholds;  // matching cutoffs, non-increasing
    std::string provenance;          // "shuffle" or "fisher"
    std::size_t replicates = 0;      // shuffle only
    NullMoments null_moments;
    std::optional<std::string> precision_warning;

    double threshold_for(double level) const;  // throws ConfigError if absent
};

struct SignificanceDecision {
    std::uint32_t x, y, z;
    double d = 0.0;
    double z_score = 0.0;  // Fisher path only, 0 otherwise
    bool passes = false;
    double level = 0.0;
};

// z(rho) = artanh(rho); domain |rho| < 1.
double fisher_z(double rho);

struct FisherTestResult {
    double z_score;
    double two_tailed_p;
};

// Difference test for two partial correlations sharing one sample of size n:
// z = (z(rho1) - z(rho2)) / sqrt(2/(n-3)), p two-tailed from the standard
// normal.
FisherTestResult fisher_difference_test(double rho1, double rho2, std::size_t n);

// Standard-normal quantile (Acklam's rational approximation plus one Newton
// refinement); used for Fisher critical values.
double normal_quantile(double p);

// Independently permutes each return column and the index series. With
// segment_length, whole segments are permuted and within-segment order kept.
// Deterministic for a given seed, independent of thread count.
ReturnPanel shuffle_panel(const ReturnPanel& panel, std::uint64_t seed,
                          std::optional<std::size_t> segment_length = std::nullopt);

struct ShuffleOptions {
    std::vector<double> levels{0.01, 0.02, 0.05, 0.10, 0.20};
    std::size_t replicates = 10;
    std::uint64_t seed = 0;
    std::size_t max_triples_per_replicate = 1'000'000;
    std::optional<std::size_t> segment_length;
    int jobs = 0;
};

// Pools influence values from shuffled replicates and reads off the
// (1 - level/2) quantile of |d-hat| per level.
ThresholdTable empirical_thresholds(const ReturnPanel& panel, const ShuffleOptions& opts);

struct SignificanceResult {
    InfluenceTensor tensor;  // surviving entries only
    std::vector<SignificanceDecision> decisions;
};

// Shuffle path: keep entries with |d| > threshold(level), both tails.
SignificanceResult apply_significance(const InfluenceTensor& tensor, const ThresholdTable& table,
                                      double level);

// Fisher path: per-entry z difference test against the two-tailed critical
// value at `level`. Needs the first-order partial matrix to recover
// rho(X,Y:M) and the sample size.
SignificanceResult apply_fisher_significance(const InfluenceTensor& tensor,
                                             const PartialCorrelationMatrix& partial,
                                             std::size_t sample_size, double level);

// Streams the triple enumeration and keeps only entries passing the Fisher
// difference test; usable at panel scale where a dense tensor is not.
InfluenceTensor fisher_filtered_tensor(const PartialCorrelationMatrix& partial,
                                       std::size_t sample_size, double level, int jobs = 0);

void write_threshold_table_csv(const ThresholdTable& table, const std::string& path);
void write_null_moments_json(const ThresholdTable& table, const std::string& path);

}  // namespace pcinf
