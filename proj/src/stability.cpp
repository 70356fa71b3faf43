#include "pcinf/stability.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "pcinf/csv.hpp"
#include "pcinf/errors.hpp"
#include "pcinf/parallel.hpp"
#include "pcinf/rng.hpp"

namespace pcinf {

namespace {

constexpr const char* kStage = "stability_analysis";
const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string quarter_label(const std::string& iso_date) {
    // Expects YYYY-MM-DD.
    if (iso_date.size() < 7 || iso_date[4] != '-') {
        throw ConfigError(kStage, "bad_date", "expected ISO-8601 date, got '" + iso_date + "'");
    }
    int month = (iso_date[5] - '0') * 10 + (iso_date[6] - '0');
    if (month < 1 || month > 12) {
        throw ConfigError(kStage, "bad_date", "invalid month in '" + iso_date + "'");
    }
    return iso_date.substr(0, 4) + "Q" + std::to_string((month - 1) / 3 + 1);
}

// Inversion counting by bottom-up merge sort.
std::uint64_t count_inversions(std::vector<std::uint32_t>& a) {
    const std::size_t n = a.size();
    std::vector<std::uint32_t> buf(n);
    std::uint64_t inversions = 0;
    for (std::size_t width = 1; width < n; width *= 2) {
        for (std::size_t left = 0; left + width < n; left += 2 * width) {
            std::size_t mid = left + width;
            std::size_t right = std::min(left + 2 * width, n);
            std::size_t i = left, j = mid, k = left;
            while (i < mid && j < right) {
                if (a[j] < a[i]) {
                    inversions += mid - i;
                    buf[k++] = a[j++];
                } else {
                    buf[k++] = a[i++];
                }
            }
            while (i < mid) buf[k++] = a[i++];
            while (j < right) buf[k++] = a[j++];
            std::copy(buf.begin() + static_cast<std::ptrdiff_t>(left),
                      buf.begin() + static_cast<std::ptrdiff_t>(right),
                      a.begin() + static_cast<std::ptrdiff_t>(left));
        }
    }
    return inversions;
}

ReturnPanel slice_panel(const ReturnPanel& panel, std::size_t row_begin, std::size_t row_end) {
    ReturnPanel out;
    out.index_ticker = panel.index_ticker;
    out.tickers = panel.tickers;
    out.dates.assign(panel.dates.begin() + static_cast<std::ptrdiff_t>(row_begin),
                     panel.dates.begin() + static_cast<std::ptrdiff_t>(row_end));
    const Eigen::Index rows = static_cast<Eigen::Index>(row_end - row_begin);
    out.returns = panel.returns.middleRows(static_cast<Eigen::Index>(row_begin), rows);
    out.index_returns = panel.index_returns.segment(static_cast<Eigen::Index>(row_begin), rows);
    return out;
}

// Drops zero-variance columns for the quarter; they carry no correlation
// information and would poison the partial matrix.
ReturnPanel drop_degenerate_columns(const ReturnPanel& panel) {
    const Eigen::Index T = panel.returns.rows();
    const Eigen::Index N = panel.returns.cols();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < N; ++j) {
        double mean = panel.returns.col(j).mean();
        if ((panel.returns.col(j).array() - mean).abs().maxCoeff() > 0.0) keep.push_back(j);
    }
    if (static_cast<Eigen::Index>(keep.size()) == N) return panel;
    ReturnPanel out;
    out.index_ticker = panel.index_ticker;
    out.dates = panel.dates;
    out.index_returns = panel.index_returns;
    out.returns.resize(T, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        out.tickers.push_back(panel.tickers[static_cast<std::size_t>(keep[k])]);
        out.returns.col(static_cast<Eigen::Index>(k)) = panel.returns.col(keep[k]);
    }
    return out;
}

struct LmResult {
    double tau0, lambda, rms;
};

// Levenberg-Marquardt on (tau0, lambda) for tau0 * exp(-t/lambda).
LmResult fit_exponential(const std::vector<std::pair<double, double>>& pts, double tau0,
                         double lambda) {
    auto cost = [&](double a, double l) {
        double c = 0.0;
        for (const auto& [t, y] : pts) {
            double r = a * std::exp(-t / l) - y;
            c += r * r;
        }
        return c;
    };
    double mu = 1e-3;
    double current = cost(tau0, lambda);
    for (int iter = 0; iter < 200; ++iter) {
        double j11 = 0, j12 = 0, j22 = 0, g1 = 0, g2 = 0;
        for (const auto& [t, y] : pts) {
            double e = std::exp(-t / lambda);
            double r = tau0 * e - y;
            double da = e;
            double dl = tau0 * e * t / (lambda * lambda);
            j11 += da * da;
            j12 += da * dl;
            j22 += dl * dl;
            g1 += da * r;
            g2 += dl * r;
        }
        bool stepped = false;
        for (int attempt = 0; attempt < 25; ++attempt) {
            double a11 = j11 + mu * j11, a12 = j12, a22 = j22 + mu * j22;
            double det = a11 * a22 - a12 * a12;
            if (det == 0.0 || !std::isfinite(det)) {
                mu *= 10.0;
                continue;
            }
            double s1 = -(a22 * g1 - a12 * g2) / det;
            double s2 = -(-a12 * g1 + a11 * g2) / det;
            double na = tau0 + s1;
            double nl = lambda + s2;
            if (nl <= 0.0 || !std::isfinite(na) || !std::isfinite(nl)) {
                mu *= 10.0;
                continue;
            }
            double next = cost(na, nl);
            if (next < current) {
                tau0 = na;
                lambda = nl;
                if (current - next < 1e-15 * (1.0 + current)) {
                    current = next;
                    iter = 200;
                }
                current = next;
                mu = std::max(mu * 0.3, 1e-12);
                stepped = true;
                break;
            }
            mu *= 10.0;
        }
        if (!stepped) break;
    }
    return {tau0, lambda, std::sqrt(current / static_cast<double>(pts.size()))};
}

}  // namespace

QuarterCalendar make_quarter_calendar(const std::vector<std::string>& dates,
                                      std::size_t min_days) {
    QuarterCalendar calendar;
    if (dates.empty()) return calendar;
    std::size_t start = 0;
    std::string current = quarter_label(dates[0]);
    auto flush = [&](std::size_t end) {
        if (end - start >= min_days) {
            calendar.quarters.push_back(
                {current, start, end, dates[start], dates[end - 1]});
        } else {
            calendar.dropped.push_back(current);
        }
    };
    for (std::size_t t = 1; t < dates.size(); ++t) {
        std::string label = quarter_label(dates[t]);
        if (label != current) {
            flush(t);
            start = t;
            current = label;
        }
    }
    flush(dates.size());
    return calendar;
}

QuarterlyResult quarterly_rankings(const ReturnPanel& panel, const QuarterCalendar& calendar,
                                   const QuarterlyConfig& config) {
    const std::size_t Q = calendar.quarters.size();
    std::vector<std::optional<InfluenceRanking>> results(Q);
    std::vector<std::string> skipped_by_q(Q);

    // Quarters run end-to-end in parallel; everything inside a quarter is
    // single-threaded and seeded by quarter index, so the output does not
    // depend on the schedule.
    parallel_chunks(Q, config.jobs, [&](std::size_t qb, std::size_t qe) {
        for (std::size_t q = qb; q < qe; ++q) {
            const auto& quarter = calendar.quarters[q];
            ReturnPanel sliced = slice_panel(panel, quarter.row_begin, quarter.row_end);
            ReturnPanel qpanel = drop_degenerate_columns(sliced);
            if (qpanel.num_tickers() < 3) {
                skipped_by_q[q] = quarter.label + ": fewer than 3 non-degenerate stocks";
                continue;
            }
            double index_spread =
                (qpanel.index_returns.array() - qpanel.index_returns.mean()).abs().maxCoeff();
            if (index_spread <= 0.0) {
                skipped_by_q[q] = quarter.label + ": degenerate index series";
                continue;
            }
            try {
                auto partial = partial_on_index_matrix(correlation_matrix(qpanel));
                InfluenceMatrix matrix;
                if (!config.filtered || config.method == SignificanceMethod::none) {
                    matrix = stock_influence_unfiltered(partial, 1);
                } else if (config.method == SignificanceMethod::fisher) {
                    auto tensor = fisher_filtered_tensor(
                        partial, static_cast<std::size_t>(qpanel.returns.rows()), config.level,
                        1);
                    matrix = stock_influence(tensor, AggregationMode::filtered);
                } else {
                    ShuffleOptions sopts;
                    sopts.levels = {config.level};
                    sopts.replicates = config.replicates;
                    sopts.seed = mix_seed(config.seed, q, 0x71747200ULL);
                    sopts.max_triples_per_replicate = config.max_triples_per_replicate;
                    sopts.segment_length = config.segment_length;
                    sopts.jobs = 1;
                    auto table = empirical_thresholds(qpanel, sopts);
                    TensorOptions topts;
                    topts.storage = TensorStorage::significant_only;
                    topts.threshold = table.threshold_for(config.level);
                    topts.jobs = 1;
                    auto tensor = compute_influence_tensor(partial, topts);
                    matrix = stock_influence(tensor, AggregationMode::filtered);
                }
                auto totals = total_influence(matrix, config.direction);
                auto ranking = rank_by_influence(totals, quarter.label);
                if (ranking.tickers.size() < 2) {
                    skipped_by_q[q] = quarter.label + ": fewer than 2 ranked stocks";
                    continue;
                }
                results[q] = std::move(ranking);
            } catch (const Error& e) {
                skipped_by_q[q] = quarter.label + ": " + e.what();
            }
        }
    });

    QuarterlyResult out;
    for (std::size_t q = 0; q < Q; ++q) {
        if (results[q]) {
            out.rankings.push_back(std::move(*results[q]));
        } else if (!skipped_by_q[q].empty()) {
            out.skipped.push_back(skipped_by_q[q]);
        }
    }
    return out;
}

double kendall_tau(const std::vector<std::string>& order_a,
                   const std::vector<std::string>& order_b) {
    const std::size_t n = order_a.size();
    if (n < 2 || order_b.size() != n) {
        throw ComputeError(kStage, "undefined_similarity",
                           "kendall_tau needs two orderings of the same set, n >= 2");
    }
    std::unordered_map<std::string, std::uint32_t> rank_a;
    rank_a.reserve(n);
    for (std::size_t i = 0; i < n; ++i) rank_a[order_a[i]] = static_cast<std::uint32_t>(i);
    std::vector<std::uint32_t> seq;
    seq.reserve(n);
    for (const auto& t : order_b) {
        auto it = rank_a.find(t);
        if (it == rank_a.end()) {
            throw ComputeError(kStage, "undefined_similarity",
                               "orderings cover different ticker sets ('" + t + "')");
        }
        seq.push_back(it->second);
    }
    std::uint64_t inversions = count_inversions(seq);
    double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
    // concordant - discordant = pairs - 2 * inversions (orderings are tie-free)
    return (pairs - 2.0 * static_cast<double>(inversions)) / pairs;
}

TauMatrix tau_matrix(const std::vector<InfluenceRanking>& rankings) {
    const std::size_t Q = rankings.size();
    if (Q < 2) {
        throw ComputeError(kStage, "insufficient_quarters", "need at least 2 rankings");
    }
    TauMatrix out;
    out.labels.reserve(Q);
    for (const auto& r : rankings) out.labels.push_back(r.period_label);
    out.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(Q),
                                           static_cast<Eigen::Index>(Q), kNaN);
    std::vector<std::set<std::string>> sets(Q);
    for (std::size_t i = 0; i < Q; ++i) {
        sets[i] = std::set<std::string>(rankings[i].tickers.begin(), rankings[i].tickers.end());
    }
    for (std::size_t i = 0; i < Q; ++i) {
        out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
        for (std::size_t j = i + 1; j < Q; ++j) {
            std::vector<std::string> a, b;
            for (const auto& t : rankings[i].tickers) {
                if (sets[j].count(t)) a.push_back(t);
            }
            for (const auto& t : rankings[j].tickers) {
                if (sets[i].count(t)) b.push_back(t);
            }
            if (a.size() >= 2) {
                double tau = kendall_tau(a, b);
                out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = tau;
                out.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = tau;
            }
        }
    }
    return out;
}

DecayFit decay_fit(const TauMatrix& matrix) {
    const std::size_t Q = matrix.labels.size();
    DecayFit fit;
    for (std::size_t t = 1; t < Q; ++t) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i + t < Q; ++i) {
            double v = matrix.values(static_cast<Eigen::Index>(i),
                                     static_cast<Eigen::Index>(i + t));
            if (!std::isnan(v)) {
                sum += v;
                ++count;
            }
        }
        if (count > 0) {
            fit.points.emplace_back(static_cast<double>(t), sum / static_cast<double>(count));
        }
    }
    if (fit.points.size() < 4) {
        throw ComputeError(kStage, "insufficient_intervals",
                           "need mean tau at >= 4 distinct intervals");
    }

    // Log-linear initialization over the positive points.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t npos = 0;
    bool any_positive = false;
    for (const auto& [t, y] : fit.points) {
        if (y > 0.0) {
            any_positive = true;
            double ly = std::log(y);
            sx += t;
            sy += ly;
            sxx += t * t;
            sxy += t * ly;
            ++npos;
        }
    }
    if (!any_positive) {
        throw ComputeError(kStage, "fit_failure", "all interval-averaged tau values <= 0");
    }
    double tau0_init = 0.1;
    double lambda_init = fit.points.back().first;
    if (npos >= 2) {
        double n = static_cast<double>(npos);
        double denom = n * sxx - sx * sx;
        if (denom > 0.0) {
            double slope = (n * sxy - sx * sy) / denom;
            double intercept = (sy - slope * sx) / n;
            tau0_init = std::exp(intercept);
            lambda_init = slope < 0.0 ? -1.0 / slope : 2.0 * fit.points.back().first;
        }
    }

    auto lm = fit_exponential(fit.points, tau0_init, lambda_init);
    fit.tau0 = lm.tau0;
    fit.lambda = lm.lambda;
    fit.residual_rms = lm.rms;
    return fit;
}

void write_tau_matrix_csv(const TauMatrix& matrix, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError(kStage, "io_error", "cannot write " + path);
    out << "quarter";
    for (const auto& label : matrix.labels) out << ',' << label;
    out << '\n';
    for (Eigen::Index i = 0; i < matrix.values.rows(); ++i) {
        out << matrix.labels[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < matrix.values.cols(); ++j) {
            double v = matrix.values(i, j);
            out << ',' << (std::isnan(v) ? std::string() : csv::format_double(v));
        }
        out << '\n';
    }
}

void write_decay_csv(const DecayFit& fit, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError(kStage, "io_error", "cannot write " + path);
    out << "interval,mean_tau,fitted_tau\n";
    for (const auto& [t, y] : fit.points) {
        out << csv::format_double(t) << ',' << csv::format_double(y) << ','
            << csv::format_double(fit.tau0 * std::exp(-t / fit.lambda)) << '\n';
    }
}

void write_decay_fit_json(const DecayFit& fit, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError(kStage, "io_error", "cannot write " + path);
    out << "{\n  \"tau0\": " << csv::format_double(fit.tau0)
        << ",\n  \"lambda\": " << csv::format_double(fit.lambda)
        << ",\n  \"residual_rms\": " << csv::format_double(fit.residual_rms) << "\n}\n";
}

}  // namespace pcinf
