#include "pcinf/significance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "pcinf/csv.hpp"
#include "pcinf/errors.hpp"
#include "pcinf/parallel.hpp"
#include "pcinf/rng.hpp"

namespace pcinf {

namespace {

constexpr const char* kStage = "significance";

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Linear-interpolation quantile (type 7) of a sorted sample.
double sorted_quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) {
        throw ComputeError(kStage, "empty_sample", "quantile of empty sample");
    }
    if (q <= 0.0) return sorted.front();
    if (q >= 1.0) return sorted.back();
    double h = q * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(h);
    double frac = h - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

// Permutation of [0, n) as segment blocks of `segment` rows; the trailing
// partial segment moves as a block too.
std::vector<std::size_t> block_permutation(std::size_t n, std::size_t segment,
                                           std::mt19937_64& rng) {
    std::size_t num_segments = (n + segment - 1) / segment;
    std::vector<std::size_t> order(num_segments);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = num_segments; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> dist(0, i - 1);
        std::swap(order[i - 1], order[dist(rng)]);
    }
    std::vector<std::size_t> perm;
    perm.reserve(n);
    for (std::size_t s : order) {
        std::size_t begin = s * segment;
        std::size_t end = std::min(n, begin + segment);
        for (std::size_t t = begin; t < end; ++t) perm.push_back(t);
    }
    return perm;
}

std::vector<std::size_t> row_permutation(std::size_t n, std::optional<std::size_t> segment,
                                         std::mt19937_64& rng) {
    if (segment) return block_permutation(n, *segment, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> dist(0, i - 1);
        std::swap(perm[i - 1], perm[dist(rng)]);
    }
    return perm;
}

NullMoments compute_moments(const std::vector<double>& values) {
    NullMoments m;
    m.samples = values.size();
    if (values.empty()) return m;
    double n = static_cast<double>(values.size());
    double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : values) {
        double d = v - mean;
        double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    m.mean = mean;
    m.stddev = std::sqrt(m2);
    if (m2 > 0.0) {
        m.skewness = m3 / std::pow(m2, 1.5);
        m.kurtosis = m4 / (m2 * m2);
    }
    return m;
}

}  // namespace

double fisher_z(double rho) {
    if (std::abs(rho) >= 1.0) {
        throw ComputeError(kStage, "domain_error", "fisher_z requires |rho| < 1");
    }
    return std::atanh(rho);
}

FisherTestResult fisher_difference_test(double rho1, double rho2, std::size_t n) {
    if (n <= 3) {
        throw ComputeError(kStage, "insufficient_sample",
                           "fisher difference test needs n > 3");
    }
    double z = (fisher_z(rho1) - fisher_z(rho2)) /
               std::sqrt(2.0 / (static_cast<double>(n) - 3.0));
    double p = std::erfc(std::abs(z) / std::sqrt(2.0));
    return {z, p};
}

double normal_quantile(double p) {
    if (p <= 0.0 || p >= 1.0) {
        throw ComputeError(kStage, "domain_error", "normal_quantile requires p in (0,1)");
    }
    // Acklam's rational approximation.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        double q = p - 0.5;
        double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // One Newton step against the exact CDF.
    double e = normal_cdf(x) - p;
    double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return x - e / pdf;
}

ReturnPanel shuffle_panel(const ReturnPanel& panel, std::uint64_t seed,
                          std::optional<std::size_t> segment_length) {
    const std::size_t T = static_cast<std::size_t>(panel.returns.rows());
    const std::size_t N = static_cast<std::size_t>(panel.returns.cols());
    if (segment_length && (*segment_length == 0 || *segment_length > T)) {
        throw ConfigError(kStage, "bad_segment", "segment length must be in [1, T]");
    }
    ReturnPanel out = panel;
    for (std::size_t j = 0; j < N; ++j) {
        auto rng = make_engine(mix_seed(seed, j));
        auto perm = row_permutation(T, segment_length, rng);
        for (std::size_t t = 0; t < T; ++t) {
            out.returns(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
                panel.returns(static_cast<Eigen::Index>(perm[t]), static_cast<Eigen::Index>(j));
        }
    }
    {
        auto rng = make_engine(mix_seed(seed, N));  // index column
        auto perm = row_permutation(T, segment_length, rng);
        for (std::size_t t = 0; t < T; ++t) {
            out.index_returns(static_cast<Eigen::Index>(t)) =
                panel.index_returns(static_cast<Eigen::Index>(perm[t]));
        }
    }
    return out;
}

double ThresholdTable::threshold_for(double level) const {
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (std::abs(levels[i] - level) < 1e-12) return thresholds[i];
    }
    throw ConfigError("significance", "missing_level",
                      "level " + csv::format_double(level) + " not present in threshold table");
}

ThresholdTable empirical_thresholds(const ReturnPanel& panel, const ShuffleOptions& opts) {
    if (opts.replicates < 1) {
        throw ConfigError(kStage, "bad_replicates", "replicates must be >= 1");
    }
    for (double level : opts.levels) {
        if (level <= 0.0 || level > 0.5) {
            throw ConfigError(kStage, "bad_level", "levels must lie in (0, 0.5]");
        }
    }
    const std::size_t N = static_cast<std::size_t>(panel.returns.cols());
    const std::uint64_t total_triples = triple_count(N);
    if (total_triples == 0) {
        throw ComputeError(kStage, "insufficient_tickers", "need at least 3 stocks");
    }
    const double keep_prob =
        opts.max_triples_per_replicate >= total_triples
            ? 1.0
            : static_cast<double>(opts.max_triples_per_replicate) /
                  static_cast<double>(total_triples);

    // Each replicate is deterministic on its own seed stream; replicates run
    // in parallel and are pooled in replicate order.
    std::vector<std::vector<double>> pooled(opts.replicates);
    parallel_chunks(opts.replicates, opts.jobs, [&](std::size_t rb, std::size_t re) {
        for (std::size_t rep = rb; rep < re; ++rep) {
            ReturnPanel shuffled =
                shuffle_panel(panel, mix_seed(opts.seed, rep, 0x7265706cULL),
                              opts.segment_length);
            auto partial = partial_on_index_matrix(correlation_matrix(shuffled));
            const Eigen::MatrixXd& P = partial.values;
            auto sample_rng = make_engine(mix_seed(opts.seed, rep, 0x73616d70ULL));
            std::bernoulli_distribution keep(keep_prob);
            auto& values = pooled[rep];
            values.reserve(std::min<std::uint64_t>(total_triples,
                                                   opts.max_triples_per_replicate + 16));
            for (std::size_t z = 0; z < N; ++z) {
                const Eigen::Index zi = static_cast<Eigen::Index>(z);
                for (std::size_t x = 0; x + 1 < N; ++x) {
                    if (x == z) continue;
                    const double pxz = P(static_cast<Eigen::Index>(x), zi);
                    const double one_minus_xz = 1.0 - pxz * pxz;
                    for (std::size_t y = x + 1; y < N; ++y) {
                        if (y == z) continue;
                        if (keep_prob < 1.0 && !keep(sample_rng)) continue;
                        const double pyz = P(static_cast<Eigen::Index>(y), zi);
                        const double pxy =
                            P(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
                        double denom = std::sqrt(one_minus_xz * (1.0 - pyz * pyz));
                        if (denom <= 0.0) continue;
                        values.push_back(pxy - (pxy - pxz * pyz) / denom);
                    }
                }
            }
        }
    });

    std::vector<double> all;
    for (auto& v : pooled) {
        all.insert(all.end(), v.begin(), v.end());
        v.clear();
        v.shrink_to_fit();
    }

    ThresholdTable table;
    table.levels = opts.levels;
    std::sort(table.levels.begin(), table.levels.end());
    table.provenance = "shuffle";
    table.replicates = opts.replicates;
    table.null_moments = compute_moments(all);

    std::vector<double> abs_sorted(all.size());
    std::transform(all.begin(), all.end(), abs_sorted.begin(),
                   [](double v) { return std::abs(v); });
    std::sort(abs_sorted.begin(), abs_sorted.end());
    table.thresholds.reserve(table.levels.size());
    for (double level : table.levels) {
        // Two-tailed test on the absolute statistic: |d| exceeds the (1-l)
        // quantile of the null |d-hat| with probability l, l/2 in each tail.
        table.thresholds.push_back(sorted_quantile(abs_sorted, 1.0 - level));
    }

    double min_level = table.levels.front();
    if (static_cast<double>(all.size()) < 10.0 / min_level) {
        table.precision_warning =
            "pooled null sample of " + std::to_string(all.size()) +
            " is below 10/min(level); tail quantiles are imprecise";
    }
    return table;
}

SignificanceResult apply_significance(const InfluenceTensor& tensor, const ThresholdTable& table,
                                      double level) {
    double thr = table.threshold_for(level);
    SignificanceResult result;
    result.tensor.tickers = tensor.tickers;
    result.tensor.storage = TensorStorage::significant_only;
    result.tensor.threshold = thr;
    result.tensor.skipped = tensor.skipped;
    result.decisions.reserve(tensor.entries.size());
    for (const auto& e : tensor.entries) {
        bool passes = std::abs(e.d) > thr;
        result.decisions.push_back({e.x, e.y, e.z, e.d, 0.0, passes, level});
        if (passes) result.tensor.entries.push_back(e);
    }
    return result;
}

SignificanceResult apply_fisher_significance(const InfluenceTensor& tensor,
                                             const PartialCorrelationMatrix& partial,
                                             std::size_t sample_size, double level) {
    if (level <= 0.0 || level > 0.5) {
        throw ConfigError(kStage, "bad_level", "level must lie in (0, 0.5]");
    }
    double critical = normal_quantile(1.0 - level / 2.0);
    SignificanceResult result;
    result.tensor.tickers = tensor.tickers;
    result.tensor.storage = TensorStorage::significant_only;
    result.tensor.threshold = 0.0;
    result.tensor.skipped = tensor.skipped;
    result.decisions.reserve(tensor.entries.size());
    for (const auto& e : tensor.entries) {
        double rho1 = partial.values(static_cast<Eigen::Index>(e.x),
                                     static_cast<Eigen::Index>(e.y));
        double rho2 = rho1 - e.d;
        auto test = fisher_difference_test(rho1, rho2, sample_size);
        bool passes = std::abs(test.z_score) > critical;
        result.decisions.push_back({e.x, e.y, e.z, e.d, test.z_score, passes, level});
        if (passes) result.tensor.entries.push_back(e);
    }
    return result;
}

InfluenceTensor fisher_filtered_tensor(const PartialCorrelationMatrix& partial,
                                       std::size_t sample_size, double level, int jobs) {
    if (level <= 0.0 || level > 0.5) {
        throw ConfigError(kStage, "bad_level", "level must lie in (0, 0.5]");
    }
    if (sample_size <= 3) {
        throw ComputeError(kStage, "insufficient_sample",
                           "fisher difference test needs n > 3");
    }
    const double critical = normal_quantile(1.0 - level / 2.0);
    const double scale = std::sqrt((static_cast<double>(sample_size) - 3.0) / 2.0);
    const std::size_t N = partial.tickers.size();
    if (N < 3) {
        throw ComputeError(kStage, "insufficient_tickers", "need at least 3 stocks");
    }
    const Eigen::MatrixXd& P = partial.values;

    std::vector<std::vector<InfluenceEntry>> by_z(N);
    parallel_chunks(N, jobs, [&](std::size_t zb, std::size_t ze) {
        for (std::size_t z = zb; z < ze; ++z) {
            const Eigen::Index zi = static_cast<Eigen::Index>(z);
            auto& ent = by_z[z];
            for (std::size_t x = 0; x + 1 < N; ++x) {
                if (x == z) continue;
                const double pxz = P(static_cast<Eigen::Index>(x), zi);
                if (std::abs(pxz) >= 1.0 - 1e-12) continue;
                const double one_minus_xz = 1.0 - pxz * pxz;
                for (std::size_t y = x + 1; y < N; ++y) {
                    if (y == z) continue;
                    const double pyz = P(static_cast<Eigen::Index>(y), zi);
                    if (std::abs(pyz) >= 1.0 - 1e-12) continue;
                    const double pxy =
                        P(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
                    const double second =
                        (pxy - pxz * pyz) / std::sqrt(one_minus_xz * (1.0 - pyz * pyz));
                    if (std::abs(pxy) >= 1.0 || std::abs(second) >= 1.0) continue;
                    const double zscore = (std::atanh(pxy) - std::atanh(second)) * scale;
                    if (std::abs(zscore) > critical) {
                        ent.push_back({static_cast<std::uint32_t>(x),
                                       static_cast<std::uint32_t>(y),
                                       static_cast<std::uint32_t>(z), pxy - second});
                    }
                }
            }
        }
    });

    InfluenceTensor out;
    out.tickers = partial.tickers;
    out.storage = TensorStorage::significant_only;
    out.threshold = 0.0;
    for (auto& v : by_z) out.entries.insert(out.entries.end(), v.begin(), v.end());
    return out;
}

void write_threshold_table_csv(const ThresholdTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError(kStage, "io_error", "cannot write " + path);
    out << "level,threshold,provenance,replicates\n";
    for (std::size_t i = 0; i < table.levels.size(); ++i) {
        out << csv::format_double(table.levels[i]) << ','
            << csv::format_double(table.thresholds[i]) << ',' << table.provenance << ','
            << table.replicates << '\n';
    }
}

void write_null_moments_json(const ThresholdTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError(kStage, "io_error", "cannot write " + path);
    const auto& m = table.null_moments;
    out << "{\n"
        << "  \"mean\": " << csv::format_double(m.mean) << ",\n"
        << "  \"stddev\": " << csv::format_double(m.stddev) << ",\n"
        << "  \"skewness\": " << csv::format_double(m.skewness) << ",\n"
        << "  \"kurtosis\": " << csv::format_double(m.kurtosis) << ",\n"
        << "  \"samples\": " << m.samples;
    if (table.precision_warning) {
        out << ",\n  \"precision_warning\": \"" << *table.precision_warning << "\"";
    }
    out << "\n}\n";
}

}  // namespace pcinf
